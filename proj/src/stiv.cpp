#include "sti/stiv.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "sti/file_util.hpp"

namespace sti {

namespace {

constexpr std::string_view kMagic = "STIV1";

bool allowed_components(Index c) { return c == 1 || c == 3 || c == 6 || c == 9; }

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string encode_stiv(const Grid& grid, const Eigen::MatrixXd& data) {
  if (!allowed_components(data.cols()))
    throw InputError("STIV supports 1, 3, 6 or 9 components, got " + std::to_string(data.cols()));
  if (data.rows() != grid.size()) throw InputError("STIV payload does not match grid size");
  std::string out;
  out += "magic: " + std::string(kMagic) + "\n";
  out += "dims: " + std::to_string(grid.dims[0]) + " " + std::to_string(grid.dims[1]) + " " +
         std::to_string(grid.dims[2]) + "\n";
  out += "voxel_size: " + format_double(grid.voxel_size[0]) + " " +
         format_double(grid.voxel_size[1]) + " " + format_double(grid.voxel_size[2]) + "\n";
  out += "ncomponents: " + std::to_string(data.cols()) + "\n";
  out += "dtype: f32le\n";
  out += "order: x-fastest\n\n";
  // Column-major storage makes the payload component-major already.
  append_f32le(out, std::span<const double>(data.data(), std::size_t(data.size())));
  return out;
}

RawVolume decode_stiv(std::string_view bytes) {
  const auto end = bytes.find("\n\n");
  if (end == std::string_view::npos) throw InputError("STIV header is not terminated by a blank line");
  std::map<std::string, std::string> header;
  std::istringstream hs{std::string(bytes.substr(0, end))};
  std::string line;
  int lineno = 0;
  while (std::getline(hs, line)) {
    ++lineno;
    const auto colon = line.find(':');
    if (colon == std::string::npos)
      throw InputError("STIV header line " + std::to_string(lineno) + " has no ':'");
    header[trim(line.substr(0, colon))] = trim(line.substr(colon + 1));
  }
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) throw InputError("STIV header is missing '" + key + "'");
    return it->second;
  };
  if (field("magic") != kMagic) throw InputError("not a STIV1 file");
  if (field("dtype") != "f32le") throw InputError("unsupported STIV dtype " + field("dtype"));
  if (auto it = header.find("order"); it != header.end() && it->second != "x-fastest")
    throw InputError("unsupported STIV order " + it->second);

  const auto dims_tok = split_ws(field("dims"));
  const auto vs_tok = split_ws(field("voxel_size"));
  if (dims_tok.size() != 3 || vs_tok.size() != 3) throw InputError("STIV dims/voxel_size need 3 values");
  std::array<Index, 3> dims{};
  std::array<double, 3> vs{};
  try {
    for (int a = 0; a < 3; ++a) {
      dims[a] = std::stoll(dims_tok[a]);
      vs[a] = std::stod(vs_tok[a]);
    }
  } catch (const std::exception&) {
    throw InputError("STIV dims/voxel_size are not numeric");
  }
  const Grid grid(dims, vs);
  Index ncomp = 0;
  try {
    ncomp = std::stoll(field("ncomponents"));
  } catch (const std::exception&) {
    throw InputError("STIV ncomponents is not numeric");
  }
  if (!allowed_components(ncomp)) throw InputError("STIV ncomponents must be 1, 3, 6 or 9");

  const auto payload = bytes.substr(end + 2);
  const auto expected = std::size_t(grid.size() * ncomp) * 4;
  if (payload.size() != expected) {
    throw InputError("STIV payload has " + std::to_string(payload.size()) + " bytes, expected " +
                     std::to_string(expected));
  }
  const auto values = parse_f32le(payload);
  RawVolume out{grid, Eigen::MatrixXd(grid.size(), ncomp)};
  for (std::size_t i = 0; i < values.size(); ++i) out.data.data()[i] = double(values[i]);
  if (!out.data.allFinite()) throw InputError("STIV payload contains non-finite values");
  return out;
}

void write_stiv(const std::filesystem::path& path, const Grid& grid, const Eigen::MatrixXd& data) {
  write_file_atomic(path, encode_stiv(grid, data));
}

RawVolume read_stiv(const std::filesystem::path& path) {
  try {
    return decode_stiv(read_file(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

namespace {

template <int C>
Volume<double, C> typed(const std::filesystem::path& path) {
  auto raw = read_stiv(path);
  if (raw.data.cols() != C) {
    throw InputError(path.string() + ": expected " + std::to_string(C) + " components, found " +
                     std::to_string(raw.data.cols()));
  }
  return Volume<double, C>(raw.grid, std::move(raw.data));
}

}  // namespace

ScalarVolume read_scalar_volume(const std::filesystem::path& path) { return typed<1>(path); }
DirectionField read_direction_field(const std::filesystem::path& path) { return typed<3>(path); }
TensorVolume read_tensor_volume(const std::filesystem::path& path) { return typed<6>(path); }
AsymTensorVolume read_asym_tensor_volume(const std::filesystem::path& path) { return typed<9>(path); }

Mask read_mask(const std::filesystem::path& path) {
  const auto v = typed<1>(path);
  Mask::Data d(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double x = v.data()(i, 0);
    if (x != 0.0 && x != 1.0) throw InputError(path.string() + ": mask values must be 0 or 1");
    d[i] = x != 0.0 ? 1 : 0;
  }
  return Mask(v.grid(), std::move(d));
}

void write_mask(const std::filesystem::path& path, const Mask& m) {
  write_stiv(path, m.grid(), m.data().cast<double>().matrix());
}

}  // namespace sti
