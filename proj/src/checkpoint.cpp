#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "mscd/network.hpp"

namespace mscd {

namespace {

constexpr const char* kMagic = "MSCD1";

struct Entry {
  std::string name;
  const TensorF* tensor;
};

std::vector<Entry> entries_of(const SiameseCDModel& model) {
  std::vector<Entry> out;
  for (const auto* stack : model.stacks()) {
    for (const auto& p : stack->params()) out.push_back({p.name, &p.value});
    std::size_t norm = 0;
    for (std::size_t i = 0; i < stack->layers().size(); ++i) {
      if (!stack->layers()[i].activated) continue;
      const auto& stats = stack->running()[norm++];
      const std::string id = stack->prefix() + ".bn" + std::to_string(i);
      out.push_back({id + ".running_mean", &stats.mean});
      out.push_back({id + ".running_var", &stats.var});
    }
  }
  return out;
}

std::map<std::string, TensorF*> mutable_entries(SiameseCDModel& model) {
  std::map<std::string, TensorF*> out;
  for (const auto& e : entries_of(model)) out[e.name] = const_cast<TensorF*>(e.tensor);
  return out;
}

}  // namespace

void save_checkpoint(const SiameseCDModel& model, const std::filesystem::path& path) {
  const auto entries = entries_of(model);
  const Arch& a = model.arch();
  std::ostringstream manifest;
  manifest << kMagic << '\n'
           << "arch " << a.projection_layers << ' ' << a.head_layers << ' ' << a.clusters << ' ' << a.width
           << ' ' << a.input_channels << ' ' << (a.shared_projections ? 1 : 0) << '\n'
           << "tensors " << entries.size() << '\n';
  for (const auto& e : entries) {
    manifest << e.name << ' ' << e.tensor->rank();
    for (Index d : e.tensor->shape()) manifest << ' ' << d;
    manifest << '\n';
  }
  manifest << "payload\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::string text = manifest.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<char> bytes;
  for (const auto& e : entries) {
    bytes.clear();
    bytes.reserve(static_cast<std::size_t>(e.tensor->size()) * 4);
    for (float v : e.tensor->values()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int shift = 0; shift < 32; shift += 8) bytes.push_back(static_cast<char>(bits >> shift));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw Error("write failed for " + path.string());
}

SiameseCDModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto end = bytes.find('\n', pos);
    if (end == std::string::npos) throw FormatError("checkpoint manifest truncated", pos);
    std::string line = bytes.substr(pos, end - pos);
    pos = end + 1;
    return line;
  };

  if (next_line() != kMagic) throw FormatError("not an MSCD1 checkpoint", 0);
  Arch arch;
  {
    const std::size_t at = pos;
    std::istringstream line(next_line());
    std::string tag;
    int shared = 0;
    line >> tag >> arch.projection_layers >> arch.head_layers >> arch.clusters >> arch.width >>
        arch.input_channels >> shared;
    if (tag != "arch" || !line) throw FormatError("malformed arch line", at);
    arch.shared_projections = shared != 0;
  }
  std::size_t count = 0;
  {
    const std::size_t at = pos;
    std::istringstream line(next_line());
    std::string tag;
    line >> tag >> count;
    if (tag != "tensors" || !line) throw FormatError("malformed tensors line", at);
  }
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = pos;
    std::istringstream line(next_line());
    std::string name;
    int rank = 0;
    line >> name >> rank;
    if (!line || rank < 1 || rank > 8) throw FormatError("malformed tensor entry", at);
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) line >> d;
    if (!line) throw FormatError("malformed tensor shape", at);
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  if (next_line() != "payload") throw FormatError("missing payload marker", pos);

  Rng rng(0);
  SiameseCDModel model(arch, rng);
  auto slots = mutable_entries(model);
  if (slots.size() != manifest.size()) {
    throw Error("checkpoint holds " + std::to_string(manifest.size()) + " tensors, architecture expects " +
                std::to_string(slots.size()));
  }
  for (const auto& [name, shape] : manifest) {
    const auto it = slots.find(name);
    if (it == slots.end()) throw Error("checkpoint tensor " + name + " does not belong to the architecture");
    TensorF& target = *it->second;
    if (target.shape() != shape) {
      throw Error("checkpoint tensor " + name + " has shape " + to_string(shape) + ", expected " +
                  to_string(target.shape()));
    }
    const std::size_t needed = static_cast<std::size_t>(target.size()) * 4;
    if (bytes.size() - pos < needed) throw FormatError("checkpoint payload truncated", bytes.size());
    for (Index i = 0; i < target.size(); ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + 4 * static_cast<std::size_t>(i));
      const std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
                                 (std::uint32_t{p[3]} << 24);
      target[i] = std::bit_cast<float>(bits);
    }
    pos += needed;
    slots.erase(it);
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after checkpoint payload", pos);
  return model;
}

}  // namespace mscd
