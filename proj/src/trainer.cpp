#include "mscd/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace mscd {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error("config: bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "off" || text == "no") return false;
  throw Error("config: bad boolean '" + std::string(text) + "' for " + std::string(key));
}

std::string format_float(float v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

}  // namespace

Arch TrainConfig::arch() const {
  Arch a;
  a.projection_layers = projection_layers;
  a.head_layers = head_layers;
  a.clusters = clusters;
  a.width = width;
  a.shared_projections = shared_projections;
  return a;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("config: I must be >= 1");
  if (phase1_epochs < 0 || phase1_epochs > epochs) throw Error("config: I1 must lie in [0, I]");
  if (iterations < 1) throw Error("config: J must be >= 1");
  if (batch < 1) throw Error("config: B must be >= 1");
  if (patch_rows < 1 || patch_cols < 1) throw Error("config: patch must be positive");
  if (stride < 1) throw Error("config: stride must be >= 1");
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw Error("config: lr must be positive");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw Error("config: momentum must lie in [0, 1)");
  if (phase2_use_l2_mean && phase2_aggregate_sum) {
    throw Error("config: phase2_use_l2_mean and phase2_aggregate_sum are exclusive");
  }
  arch().validate();
}

void TrainConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "I") {
    epochs = parse_number<int>(key, value);
  } else if (key == "I1") {
    phase1_epochs = parse_number<int>(key, value);
  } else if (key == "I2") {
    // Derived; accepted when consistent with I and I1 after all keys are read.
    const int i2 = parse_number<int>(key, value);
    epochs = phase1_epochs + i2;
  } else if (key == "J") {
    iterations = parse_number<int>(key, value);
  } else if (key == "K") {
    clusters = parse_number<int>(key, value);
  } else if (key == "B") {
    batch = parse_number<int>(key, value);
  } else if (key == "patch") {
    const auto space = value.find_first_of(" \tx");
    if (space == std::string_view::npos) {
      patch_rows = patch_cols = parse_number<Index>(key, value);
    } else {
      patch_rows = parse_number<Index>(key, trim(value.substr(0, space)));
      patch_cols = parse_number<Index>(key, trim(value.substr(space + 1)));
    }
  } else if (key == "stride") {
    stride = parse_number<Index>(key, value);
  } else if (key == "lr") {
    lr = parse_number<float>(key, value);
  } else if (key == "momentum") {
    momentum = parse_number<float>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "L1") {
    projection_layers = parse_number<int>(key, value);
  } else if (key == "L2") {
    head_layers = parse_number<int>(key, value);
  } else if (key == "width") {
    width = parse_number<int>(key, value);
  } else if (key == "shared_projections") {
    shared_projections = parse_bool(key, value);
  } else if (key == "phase2_use_l2_mean") {
    phase2_use_l2_mean = parse_bool(key, value);
  } else if (key == "phase2_aggregate_sum") {
    phase2_aggregate_sum = parse_bool(key, value);
  } else {
    throw Error("config: unknown key '" + std::string(key) + "'");
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "I = " << epochs << '\n'
     << "I1 = " << phase1_epochs << '\n'
     << "J = " << iterations << '\n'
     << "K = " << clusters << '\n'
     << "B = " << batch << '\n'
     << "patch = " << patch_rows << ' ' << patch_cols << '\n'
     << "stride = " << stride << '\n'
     << "lr = " << format_float(lr) << '\n'
     << "momentum = " << format_float(momentum) << '\n'
     << "seed = " << seed << '\n'
     << "L1 = " << projection_layers << '\n'
     << "L2 = " << head_layers << '\n'
     << "width = " << width << '\n'
     << "shared_projections = " << (shared_projections ? 1 : 0) << '\n'
     << "phase2_use_l2_mean = " << (phase2_use_l2_mean ? 1 : 0) << '\n'
     << "phase2_aggregate_sum = " << (phase2_aggregate_sum ? 1 : 0) << '\n';
  return os.str();
}

TrainConfig parse_train_config(std::string_view text, TrainConfig base) {
  int line_no = 0;
  std::optional<int> i2;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      if (key == "I2") {
        i2 = parse_number<int>(key, value);
      } else {
        base.set(key, value);
      }
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (i2 && base.phase1_epochs + *i2 != base.epochs) {
    throw Error("config: I1 + I2 must equal I");
  }
  return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_train_config(buffer.str(), base);
}

PatchIndex extract_patches(Index rows, Index cols, Index patch_rows, Index patch_cols, Index stride) {
  if (stride < 1) throw Error("patch stride must be >= 1");
  if (patch_rows < 1 || patch_cols < 1) throw Error("patch size must be positive");
  if (patch_rows > rows || patch_cols > cols) {
    throw Error("patch " + std::to_string(patch_rows) + "x" + std::to_string(patch_cols) +
                " larger than scene " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  PatchIndex anchors;
  for (Index r = 0; r + patch_rows <= rows; r += stride) {
    for (Index c = 0; c + patch_cols <= cols; c += stride) anchors.push_back({r, c});
  }
  return anchors;
}

TensorF gather_patches(const Raster& raster, std::span<const PatchAnchor> anchors, Index patch_rows,
                       Index patch_cols) {
  if (anchors.empty()) throw Error("gather_patches: no anchors");
  TensorF out({static_cast<Index>(anchors.size()), raster.bands(), patch_rows, patch_cols});
  for (std::size_t n = 0; n < anchors.size(); ++n) {
    const auto& a = anchors[n];
    if (a.row < 0 || a.col < 0 || a.row + patch_rows > raster.rows() || a.col + patch_cols > raster.cols()) {
      throw Error("gather_patches: anchor outside the scene");
    }
    for (Index b = 0; b < raster.bands(); ++b) {
      for (Index r = 0; r < patch_rows; ++r) {
        const float* src = raster.data().data() + (b * raster.rows() + a.row + r) * raster.cols() + a.col;
        std::copy(src, src + patch_cols, &out.at(static_cast<Index>(n), b, r, 0));
      }
    }
  }
  return out;
}

TensorF permute_batch(const TensorF& batch, std::span<const std::size_t> perm) {
  require_rank4(batch, "batch");
  if (static_cast<Index>(perm.size()) != batch.dim(0)) throw Error("permute_batch: permutation size mismatch");
  TensorF out(batch.shape());
  for (std::size_t b = 0; b < perm.size(); ++b) {
    out.sample(static_cast<Index>(b)) = batch.sample(static_cast<Index>(perm[b]));
  }
  return out;
}

LossTag scheduled_loss(const TrainConfig& cfg, int epoch, int j) {
  if (epoch <= cfg.phase1_epochs) return LossTag::Joint;
  if (cfg.phase2_aggregate_sum) return LossTag::Aggregate;
  switch (j % 3) {
    case 1: return cfg.phase2_use_l2_mean ? LossTag::Cluster12Mean : LossTag::Cluster1;
    case 2: return LossTag::Temporal;
    default: return LossTag::Contrastive;
  }
}

Trainer::Trainer(SiameseCDModel& model, const Raster& x1, const Raster& z2, const TrainConfig& cfg)
    : model_(model), x1_(x1), z2_(z2), cfg_(cfg) {
  cfg_.validate();
  if (!x1.same_dims(z2)) throw ShapeError("training images differ in size");
  const auto channels = model.arch().input_channels;
  if (x1.bands() != channels || z2.bands() != channels) {
    throw ShapeError("training images must have " + std::to_string(channels) + " bands");
  }
  if (model.arch().clusters != cfg_.clusters) throw Error("model K does not match config K");
  anchors_ = extract_patches(x1.rows(), x1.cols(), cfg_.patch_rows, cfg_.patch_cols, cfg_.stride);
}

TraceRow Trainer::step(const TensorF& x, const TensorF& z, const TensorF& z_shuffled, LossTag tag,
                       PseudoLabelMap* labels) {
  const bool want_l2 = tag == LossTag::Joint || tag == LossTag::Cluster12Mean;
  const bool want_pair = want_l2 || tag == LossTag::Temporal || tag == LossTag::Aggregate;
  const bool want_shuffled = tag == LossTag::Contrastive || tag == LossTag::Aggregate;

  TraceRow row;
  row.tag = tag;

  SiameseCDModel::BranchTape tape1, tape2, tape3;
  const TensorF y1 = model_.forward_opt(x, Mode::Train, &tape1);
  auto cluster1 = deep_cluster_loss(y1, labels);
  row.l1 = cluster1.value;

  TensorF grad_y1(y1.shape());
  TensorF y2;
  TensorF grad_y2;
  TensorF y3;
  TensorF grad_y3;
  if (want_pair) {
    y2 = model_.forward_sar(z, Mode::Train, &tape2);
    grad_y2 = TensorF(y2.shape());
    if (want_l2) row.l2 = deep_cluster_loss(y2).value;
    row.l12 = temporal_consistency_loss(y1, y2).value;
  }
  if (want_shuffled) {
    y3 = model_.forward_sar(z_shuffled, Mode::Train, &tape3);
    grad_y3 = TensorF(y3.shape());
    row.l12c = contrastive_loss(y1, y3).value;
  }

  switch (tag) {
    case LossTag::Joint:
    case LossTag::Cluster12Mean: {
      auto cluster2 = deep_cluster_loss(y2);
      row.value = 0.5 * (cluster1.value + cluster2.value);
      grad_y1.array() = 0.5f * cluster1.grad_a.array();
      grad_y2.array() = 0.5f * cluster2.grad_a.array();
      break;
    }
    case LossTag::Cluster1:
      row.value = cluster1.value;
      grad_y1 = std::move(cluster1.grad_a);
      break;
    case LossTag::Temporal: {
      auto temporal = temporal_consistency_loss(y1, y2);
      row.value = temporal.value;
      grad_y1 = std::move(temporal.grad_a);
      grad_y2 = std::move(temporal.grad_b);
      break;
    }
    case LossTag::Contrastive: {
      auto contrastive = contrastive_loss(y1, y3);
      row.value = contrastive.value;
      grad_y1 = std::move(contrastive.grad_a);
      grad_y3 = std::move(contrastive.grad_b);
      break;
    }
    case LossTag::Aggregate: {
      auto temporal = temporal_consistency_loss(y1, y2);
      auto contrastive = contrastive_loss(y1, y3);
      row.value = cluster1.value + temporal.value + contrastive.value;
      grad_y1.array() = cluster1.grad_a.array() + temporal.grad_a.array() + contrastive.grad_a.array();
      grad_y2 = std::move(temporal.grad_b);
      grad_y3 = std::move(contrastive.grad_b);
      break;
    }
    case LossTag::Cluster2:
      throw Error("L2 alone is not part of the training schedule");
  }
  if (!std::isfinite(row.value)) {
    throw Error("non-finite loss " + std::string(tag_name(tag)) + " (L1=" + std::to_string(row.l1) +
                ", L2=" + std::to_string(row.l2) + ", L12=" + std::to_string(row.l12) +
                ", L12c=" + std::to_string(row.l12c) + ")");
  }

  model_.backward_opt(tape1, grad_y1);
  if (want_pair) model_.backward_sar(tape2, grad_y2);
  if (want_shuffled) model_.backward_sar(tape3, grad_y3);

  // Every schedule entry involves y1, so f_opt and h always receive a
  // gradient; f_sar only when a SAR output enters the loss.
  sgd_momentum_step(model_.f_opt().params(), cfg_.lr, cfg_.momentum);
  if (!model_.arch().shared_projections && (want_pair || want_shuffled)) {
    sgd_momentum_step(model_.f_sar().params(), cfg_.lr, cfg_.momentum);
  }
  sgd_momentum_step(model_.head().params(), cfg_.lr, cfg_.momentum);
  model_.zero_grad();
  return row;
}

TrainResult Trainer::run(const std::function<void(const TraceRow&)>& on_row, std::ostream* log) {
  TrainResult result;
  Rng rng = Rng::derive(cfg_.seed, 1);
  PatchIndex order = anchors_;
  long iteration = 0;
  const auto batch_size = static_cast<std::size_t>(cfg_.batch);

  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    rng.shuffle(std::span<PatchAnchor>(order));
    std::vector<std::int64_t> usage(static_cast<std::size_t>(cfg_.clusters), 0);
    double l1_sum = 0.0;
    long l1_count = 0;

    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - start);
      const std::span<const PatchAnchor> anchors(order.data() + start, count);
      const TensorF x = gather_patches(x1_, anchors, cfg_.patch_rows, cfg_.patch_cols);
      const TensorF z = gather_patches(z2_, anchors, cfg_.patch_rows, cfg_.patch_cols);
      const auto perm = shuffle_batch(count, rng);
      const TensorF z_shuffled = permute_batch(z, perm);

      PseudoLabelMap labels;
      for (int j = 1; j <= cfg_.iterations; ++j) {
        TraceRow row = step(x, z, z_shuffled, scheduled_loss(cfg_, epoch, j),
                            j == cfg_.iterations ? &labels : nullptr);
        row.epoch = epoch;
        row.iteration = ++iteration;
        l1_sum += row.l1;
        ++l1_count;
        if (on_row) on_row(row);
        result.trace.push_back(row);
      }
      const auto batch_usage = cluster_usage(labels, cfg_.clusters);
      for (std::size_t k = 0; k < usage.size(); ++k) usage[k] += batch_usage[k];
    }

    if (log != nullptr) {
      *log << "epoch " << epoch << "/" << cfg_.epochs << (epoch <= cfg_.phase1_epochs ? " [phase 1]" : " [phase 2]")
           << " mean L1 " << l1_sum / static_cast<double>(l1_count) << " cluster usage";
      for (auto u : usage) *log << ' ' << u;
      *log << std::endl;
    }
    result.cluster_usage.push_back(std::move(usage));
  }
  return result;
}

TrainResult train(SiameseCDModel& model, const Raster& x1, const Raster& z2, const TrainConfig& cfg,
                  std::ostream* log) {
  Trainer trainer(model, x1, z2, cfg);
  return trainer.run({}, log);
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "epoch,iteration,tag,value,L1,L2,L12,L12c\n" << std::setprecision(9);
  auto cell = [&](double v) {
    out << ',';
    if (!std::isnan(v)) out << v;
  };
  for (const auto& row : trace) {
    out << row.epoch << ',' << row.iteration << ',' << tag_name(row.tag) << ',' << row.value;
    cell(row.l1);
    cell(row.l2);
    cell(row.l12);
    cell(row.l12c);
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace mscd
