#include "cmpnet/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "cmpnet/error.hpp"

namespace cmpnet {
namespace {

constexpr char kGridMagic[4] = {'C', 'M', 'P', 'G'};
constexpr char kCheckpointMagic[4] = {'C', 'M', 'P', 'W'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  template <typename U>
  void uint(U v) {
    unsigned char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(buf, sizeof(U));
  }
  void u8(std::uint8_t v) { uint(v); }
  void u16(std::uint16_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32_array(std::span<const float> values) {
    std::vector<unsigned char> buf(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (std::size_t b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    bytes(buf.data(), buf.size());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(std::string("truncated ") + what);
    }
  }
  template <typename U>
  U uint(const char* what) {
    unsigned char buf[sizeof(U)];
    bytes(buf, sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    return v;
  }
  std::uint8_t u8(const char* what) { return uint<std::uint8_t>(what); }
  std::uint16_t u16(const char* what) { return uint<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return uint<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return uint<std::uint64_t>(what); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  void f32_array(std::span<float> values, const char* what) {
    std::vector<unsigned char> buf(values.size() * 4);
    bytes(buf.data(), buf.size(), what);
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[4 * i + b]) << (8 * b);
      values[i] = std::bit_cast<float>(bits);
    }
  }

 private:
  std::istream& in_;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

void write_f32_tensor(Writer& w, const Tensor<float>& t) { w.f32_array(t.span()); }

}  // namespace

void write_grid(const Grid2D& grid, std::ostream& out, GridDtype dtype) {
  if (grid.values.size() != grid.height * grid.width) {
    throw FormatError("grid value count does not match its dimensions");
  }
  if (dtype == GridDtype::kU8 && !grid.is_binary()) {
    throw FormatError("u8 dtype requires a binary grid");
  }
  Writer w(out);
  w.bytes(kGridMagic, 4);
  w.u32(kGridVersion);
  w.u32(checked_u32(grid.height, "grid height"));
  w.u32(checked_u32(grid.width, "grid width"));
  w.f64(grid.pitch_nm);
  w.u8(static_cast<std::uint8_t>(dtype));
  if (dtype == GridDtype::kF32) {
    w.f32_array(grid.values);
  } else {
    std::vector<unsigned char> buf(grid.values.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = grid.values[i] != 0.0f ? 1 : 0;
    w.bytes(buf.data(), buf.size());
  }
  if (!out) throw FormatError("write failed");
}

void write_grid(const Grid2D& grid, const std::filesystem::path& path, GridDtype dtype) {
  std::ostringstream buffer;
  write_grid(grid, buffer, dtype);
  write_file_atomic(path, buffer.str());
}

Grid2D read_grid(std::istream& in) {
  Reader r(in);
  char magic[4];
  r.bytes(magic, 4, "header");
  if (std::memcmp(magic, kGridMagic, 4) != 0) throw FormatError("not a CMPG file");
  const std::uint32_t version = r.u32("header");
  if (version != kGridVersion) {
    throw FormatError("unknown CMPG version " + std::to_string(version));
  }
  Grid2D grid;
  grid.height = r.u32("header");
  grid.width = r.u32("header");
  grid.pitch_nm = r.f64("header");
  const std::uint8_t dtype = r.u8("header");
  if (dtype > 1) throw FormatError("unknown CMPG dtype " + std::to_string(dtype));
  const std::uint64_t count = std::uint64_t{grid.height} * grid.width;
  if (count > kMaxElements) throw FormatError("CMPG grid too large");
  grid.values.resize(count);
  if (dtype == static_cast<std::uint8_t>(GridDtype::kF32)) {
    r.f32_array(grid.values, "payload");
  } else {
    std::vector<unsigned char> buf(count);
    r.bytes(buf.data(), buf.size(), "payload");
    for (std::size_t i = 0; i < buf.size(); ++i) grid.values[i] = static_cast<float>(buf[i]);
  }
  return grid;
}

Grid2D read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  try {
    return read_grid(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_checkpoint(const ModelState& state, std::ostream& out) {
  const UNetConfig& cfg = state.config();
  const auto& params = state.net.parameters();
  Writer w(out);
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(cfg.depth);
  w.u32(cfg.base_channels);
  w.u32(cfg.kernel);
  w.u32(cfg.frame_size);
  w.f64(state.norm.min);
  w.f64(state.norm.max);
  w.u32(state.epoch);
  w.u32(checked_u32(params.size(), "parameter count"));
  for (const Parameter<float>& p : params) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError("parameter name too long");
    }
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u8(static_cast<std::uint8_t>(p.dims.size()));
    for (std::size_t d : p.dims) w.u32(checked_u32(d, "parameter dimension"));
    write_f32_tensor(w, p.value);
  }
  w.u8(state.adam ? 1 : 0);
  if (state.adam) {
    const AdamState& adam = *state.adam;
    if (adam.first_moment.size() != params.size() || adam.second_moment.size() != params.size()) {
      throw FormatError("optimizer state does not match the parameter list");
    }
    w.u64(adam.step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (adam.first_moment[i].numel() != params[i].value.numel() ||
          adam.second_moment[i].numel() != params[i].value.numel()) {
        throw FormatError("optimizer moment shape mismatch for " + params[i].name);
      }
      write_f32_tensor(w, adam.first_moment[i]);
      write_f32_tensor(w, adam.second_moment[i]);
    }
  }
  if (!out) throw FormatError("write failed");
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ostringstream buffer;
  save_checkpoint(state, buffer);
  write_file_atomic(path, buffer.str());
}

ModelState load_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[4];
  r.bytes(magic, 4, "header");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("not a CMPW file");
  const std::uint32_t version = r.u32("header");
  if (version != kCheckpointVersion) {
    throw FormatError("unknown CMPW version " + std::to_string(version));
  }
  UNetConfig cfg;
  cfg.depth = r.u32("config");
  cfg.base_channels = r.u32("config");
  cfg.kernel = r.u32("config");
  cfg.frame_size = r.u32("config");
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid architecture config: ") + e.what());
  }

  ModelState state{UNet<float>(cfg), {}, std::nullopt, 0};
  state.norm.min = r.f64("normalization");
  state.norm.max = r.f64("normalization");
  state.epoch = r.u32("epoch");
  auto& params = state.net.parameters();
  const std::uint32_t count = r.u32("parameter count");
  if (count != params.size()) {
    throw FormatError("parameter count " + std::to_string(count) + " does not match config (" +
                      std::to_string(params.size()) + ")");
  }
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < params.size(); ++i) index.emplace(params[i].name, i);
  std::vector<bool> seen(params.size(), false);

  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint16_t name_len = r.u16("parameter record");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "parameter record");
    auto it = index.find(name);
    if (it == index.end()) throw FormatError("unexpected parameter '" + name + "'");
    if (seen[it->second]) throw FormatError("duplicate parameter '" + name + "'");
    seen[it->second] = true;
    Parameter<float>& p = params[it->second];
    const std::uint8_t ndim = r.u8("parameter record");
    std::vector<std::size_t> dims(ndim);
    for (auto& d : dims) d = r.u32("parameter record");
    if (dims != p.dims) throw FormatError("parameter shape mismatch for '" + name + "'");
    r.f32_array(p.value.span(), "parameter data");
  }

  const std::uint8_t has_adam = r.u8("optimizer flag");
  if (has_adam > 1) throw FormatError("invalid optimizer flag");
  if (has_adam == 1) {
    AdamState adam = make_adam_state(params);
    adam.step = r.u64("optimizer state");
    for (std::size_t i = 0; i < params.size(); ++i) {
      r.f32_array(adam.first_moment[i].span(), "optimizer state");
      r.f32_array(adam.second_moment[i].span(), "optimizer state");
    }
    state.adam = std::move(adam);
  }
  return state;
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  try {
    return load_checkpoint(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw FormatError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError(path.string() + ": rename failed: " + ec.message());
}

}  // namespace cmpnet
