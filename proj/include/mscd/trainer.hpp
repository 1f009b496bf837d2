#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "mscd/losses.hpp"
#include "mscd/network.hpp"
#include "mscd/raster.hpp"

namespace mscd {

/// Training hyperparameters. Config-file keys are given in brackets.
struct TrainConfig {
  int epochs = 5;          // [I]
  int phase1_epochs = 1;   // [I1] clustering-only epochs; I2 = I - I1
  int iterations = 50;     // [J] inner iterations per batch
  int clusters = 4;        // [K]
  int batch = 8;           // [B]
  Index patch_rows = 64;   // [patch] "R C" or a single size
  Index patch_cols = 64;
  Index stride = 32;       // [stride]
  float lr = 1e-3f;        // [lr]
  float momentum = 0.9f;   // [momentum]
  std::uint64_t seed = 0;  // [seed]

  int projection_layers = 4;  // [L1]
  int head_layers = 1;        // [L2]
  int width = 64;             // [width]
  bool shared_projections = false;    // [shared_projections]
  bool phase2_use_l2_mean = false;    // [phase2_use_l2_mean]
  bool phase2_aggregate_sum = false;  // [phase2_aggregate_sum]

  int phase2_epochs() const { return epochs - phase1_epochs; }
  Arch arch() const;
  void validate() const;

  /// Sets one field from its config key; throws on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  /// key = value lines that parse back to this config.
  std::string to_text() const;
};

/// Parses `key = value` lines over the defaults. Blank lines and lines
/// starting with '#' are ignored.
TrainConfig parse_train_config(std::string_view text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

struct PatchAnchor {
  Index row = 0;
  Index col = 0;
  friend bool operator==(const PatchAnchor&, const PatchAnchor&) = default;
};
using PatchIndex = std::vector<PatchAnchor>;

/// Top-left anchors on the stride grid for patches that fit entirely inside
/// the scene, in row-major order.
PatchIndex extract_patches(Index rows, Index cols, Index patch_rows, Index patch_cols, Index stride);

/// Stacks the patches at `anchors` into an N x bands x patch_rows x patch_cols tensor.
TensorF gather_patches(const Raster& raster, std::span<const PatchAnchor> anchors, Index patch_rows,
                       Index patch_cols);

/// Reorders samples: out[b] = batch[perm[b]].
TensorF permute_batch(const TensorF& batch, std::span<const std::size_t> perm);

/// Loss used at inner iteration j (1-based) of epoch i (1-based).
LossTag scheduled_loss(const TrainConfig& cfg, int epoch, int j);

inline constexpr double kNotComputed = std::numeric_limits<double>::quiet_NaN();

/// One optimizer step. `value` is the loss that was minimized; the component
/// columns hold whichever losses were evaluated (NaN otherwise).
struct TraceRow {
  int epoch = 0;
  long iteration = 0;  // 1-based, global
  LossTag tag = LossTag::Joint;
  double value = 0.0;
  double l1 = kNotComputed;
  double l2 = kNotComputed;
  double l12 = kNotComputed;
  double l12c = kNotComputed;
};

struct TrainResult {
  std::vector<TraceRow> trace;
  /// Optical-branch cluster sizes per epoch, summed over the last inner
  /// iteration of each batch.
  std::vector<std::vector<std::int64_t>> cluster_usage;
};

/// Runs the two-phase self-supervised schedule on one co-registered pair.
class Trainer {
 public:
  /// x1 and z2 must be standardized, equal-sized, with model.arch().input_channels bands.
  Trainer(SiameseCDModel& model, const Raster& x1, const Raster& z2, const TrainConfig& cfg);

  const PatchIndex& anchors() const { return anchors_; }

  /// Full schedule. `on_row` is called after every step; `log` receives a
  /// per-epoch summary when non-null.
  TrainResult run(const std::function<void(const TraceRow&)>& on_row = {}, std::ostream* log = nullptr);

  /// Forward, loss, backward, SGD step and zero-grad for one inner iteration.
  /// Only the stacks the loss reaches are updated.
  TraceRow step(const TensorF& x, const TensorF& z, const TensorF& z_shuffled, LossTag tag,
                PseudoLabelMap* labels = nullptr);

 private:
  SiameseCDModel& model_;
  const Raster& x1_;
  const Raster& z2_;
  TrainConfig cfg_;
  PatchIndex anchors_;
};

TrainResult train(SiameseCDModel& model, const Raster& x1, const Raster& z2, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

/// CSV with header "epoch,iteration,tag,value,L1,L2,L12,L12c"; components
/// that were not evaluated are left empty.
void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

}  // namespace mscd
