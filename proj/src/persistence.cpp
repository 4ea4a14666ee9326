#include "forestdiff/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "forestdiff/errors.hpp"

namespace forestdiff {

namespace {

constexpr char kMagic[8] = {'F', 'D', 'I', 'F', 'M', 'O', 'D', 'L'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> finish() {
    u64(fnv1a(out_.data(), out_.size()));
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  // Guards allocations driven by counts read from the file.
  std::size_t count(std::uint64_t n, std::size_t min_bytes_each) {
    if (min_bytes_each > 0 && n > (in_.size() - pos_) / min_bytes_each)
      throw FormatError("model file is truncated or corrupted");
    return static_cast<std::size_t>(n);
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError("model file is truncated");
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

void write_schema(Writer& w, const TableSchema& s) {
  w.u32(static_cast<std::uint32_t>(s.size()));
  for (const auto& v : s.variables) {
    w.str(v.name);
    w.u8(static_cast<std::uint8_t>(v.kind));
    w.u32(static_cast<std::uint32_t>(v.categories.size()));
    for (const auto& c : v.categories) w.str(c);
  }
  w.u8(s.outcome_index ? 1 : 0);
  w.u32(s.outcome_index ? static_cast<std::uint32_t>(*s.outcome_index) : 0);
}

TableSchema read_schema(Reader& r) {
  TableSchema s;
  const std::size_t n = r.count(r.u32(), 9);
  for (std::size_t i = 0; i < n; ++i) {
    Variable v;
    v.name = r.str();
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(VariableKind::binary))
      throw FormatError("unknown variable kind in model file");
    v.kind = static_cast<VariableKind>(kind);
    const std::size_t k = r.count(r.u32(), 4);
    for (std::size_t c = 0; c < k; ++c) v.categories.push_back(r.str());
    s.variables.push_back(std::move(v));
  }
  const bool has_outcome = r.u8() != 0;
  const std::uint32_t outcome = r.u32();
  if (has_outcome) s.outcome_index = outcome;
  return s;
}

void write_forest(Writer& w, const gbt::Forest& f) {
  w.u32(static_cast<std::uint32_t>(f.n_features));
  w.f64(f.base_score);
  w.f64(f.learning_rate);
  w.u32(static_cast<std::uint32_t>(f.trees.size()));
  for (const auto& t : f.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) w.i32(n.feature);
    for (const auto& n : t.nodes) w.f64(n.threshold);
    for (const auto& n : t.nodes) w.u8(n.default_left ? 1 : 0);
    for (const auto& n : t.nodes) w.i32(n.left);
    for (const auto& n : t.nodes) w.i32(n.right);
    for (const auto& n : t.nodes) w.f64(n.value);
  }
}

gbt::Forest read_forest(Reader& r) {
  gbt::Forest f;
  f.n_features = r.u32();
  f.base_score = r.f64();
  f.learning_rate = r.f64();
  const std::size_t n_trees = r.count(r.u32(), 4);
  f.trees.resize(n_trees);
  for (auto& t : f.trees) {
    const std::size_t n = r.count(r.u32(), 29);
    if (n == 0) throw FormatError("empty tree in model file");
    t.nodes.resize(n);
    for (auto& node : t.nodes) node.feature = r.i32();
    for (auto& node : t.nodes) node.threshold = r.f64();
    for (auto& node : t.nodes) node.default_left = r.u8() != 0;
    for (auto& node : t.nodes) node.left = r.i32();
    for (auto& node : t.nodes) node.right = r.i32();
    for (auto& node : t.nodes) node.value = r.f64();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& node = t.nodes[i];
      if (node.is_leaf()) continue;
      // Children always follow their parent, which rules out cycles.
      const auto in_range = [&](std::int32_t c) {
        return c > static_cast<std::int32_t>(i) && static_cast<std::size_t>(c) < n;
      };
      if (static_cast<std::size_t>(node.feature) >= f.n_features || !in_range(node.left) ||
          !in_range(node.right))
        throw FormatError("malformed tree in model file");
    }
  }
  return f;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const ForestDiffusionModel& model) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kModelFormatVersion);
  write_schema(w, model.schema);
  w.u8(model.process == ProcessKind::flow_matching ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.grid.n_t));
  w.f64(model.schedule.beta_min);
  w.f64(model.schedule.beta_max);
  w.u32(static_cast<std::uint32_t>(model.n_noise));

  write_schema(w, model.encoder.schema());
  w.u32(static_cast<std::uint32_t>(model.encoder.variables().size()));
  for (const auto& e : model.encoder.variables()) {
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.f64(e.min);
    w.f64(e.max);
    w.u8(e.degenerate ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(e.offset));
    w.u32(static_cast<std::uint32_t>(e.width));
  }

  w.u8(model.conditioned ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.label_probs.size()));
  for (double p : model.label_probs) w.f64(p);

  w.u64(model.forests.size());
  for (const auto& f : model.forests) write_forest(w, f);
  return w.finish();
}

ForestDiffusionModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError("not a forest diffusion model file");
  Reader r(bytes);
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw FormatError("model format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a(bytes.data(), body)) throw FormatError("model file checksum mismatch");

  ForestDiffusionModel m;
  try {
    m.schema = read_schema(r);
    m.process = r.u8() == 1 ? ProcessKind::flow_matching : ProcessKind::vp_diffusion;
    m.grid.n_t = static_cast<int>(r.u32());
    m.schedule.beta_min = r.f64();
    m.schedule.beta_max = r.f64();
    m.n_noise = static_cast<int>(r.u32());

    TableSchema enc_schema = read_schema(r);
    const std::size_t n_vars = r.count(r.u32(), 26);
    std::vector<VariableEncoding> vars(n_vars);
    for (auto& e : vars) {
      const std::uint8_t kind = r.u8();
      if (kind > static_cast<std::uint8_t>(VariableKind::binary))
        throw FormatError("unknown variable kind in model file");
      e.kind = static_cast<VariableKind>(kind);
      e.min = r.f64();
      e.max = r.f64();
      e.degenerate = r.u8() != 0;
      e.offset = r.u32();
      e.width = r.u32();
    }
    m.encoder = Encoder(std::move(enc_schema), std::move(vars));

    m.conditioned = r.u8() != 0;
    const std::size_t n_labels = r.count(r.u32(), 8);
    for (std::size_t k = 0; k < n_labels; ++k) m.label_probs.push_back(r.f64());

    const std::size_t n_forests = r.count(r.u64(), 24);
    m.forests.reserve(n_forests);
    for (std::size_t i = 0; i < n_forests; ++i) m.forests.push_back(read_forest(r));
    if (r.position() != body) throw FormatError("trailing bytes in model file");
    m.schema.validate();
    m.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("inconsistent model file: ") + e.what());
  }
  return m;
}

void save_model(const std::string& path, const ForestDiffusionModel& model) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

ForestDiffusionModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return deserialize_model(bytes);
}

}  // namespace forestdiff
