#include "cfie/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cfie/errors.hpp"

namespace cfie::num {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

std::string read_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw VersionError("truncated checkpoint");
  return line;
}

std::size_t parse_count(const std::string& line, const std::string& key) {
  if (line.rfind(key + " ", 0) != 0) throw VersionError("malformed checkpoint: expected '" + key + "'");
  try {
    return static_cast<std::size_t>(std::stoull(line.substr(key.size() + 1)));
  } catch (const std::exception&) {
    throw VersionError("malformed checkpoint count after '" + key + "'");
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::string& header, const ParameterSet& params) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "header " << header.size() << '\n' << header << '\n';
  out << "params " << params.size() << '\n';
  for (const Parameter* p : params.all()) {
    out << p->name << '\t' << p->value.rows() << '\t' << p->value.cols() << '\n';
    out.write(reinterpret_cast<const char*>(p->value.data().data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    out << '\n';
  }
}

CheckpointData read_checkpoint(std::istream& in) {
  const std::string magic = read_line(in);
  std::istringstream ms(magic);
  std::string tag;
  int version = 0;
  ms >> tag >> version;
  if (tag != kCheckpointMagic) throw VersionError("not a checkpoint file (bad magic)");
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  CheckpointData data;
  const std::size_t header_size = parse_count(read_line(in), "header");
  data.header.resize(header_size);
  in.read(data.header.data(), static_cast<std::streamsize>(header_size));
  if (!in || in.get() != '\n') throw VersionError("truncated checkpoint header");
  const std::size_t count = parse_count(read_line(in), "params");
  for (std::size_t k = 0; k < count; ++k) {
    std::istringstream ls(read_line(in));
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!std::getline(ls, name, '\t') || !(ls >> rows >> cols))
      throw VersionError("malformed parameter record " + std::to_string(k));
    std::vector<double> values(rows * cols);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in || in.get() != '\n') throw VersionError("truncated values for parameter " + name);
    data.params.emplace_back(name, Array(Shape{rows, cols}, std::move(values)));
  }
  return data;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& header,
                     const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write checkpoint " + path.string());
  write_checkpoint(out, header, params);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

void assign_parameters(ParameterSet& params, const CheckpointData& data) {
  if (data.params.size() != params.size())
    throw VersionError("checkpoint has " + std::to_string(data.params.size()) + " parameters, model expects " +
                       std::to_string(params.size()));
  for (const auto& [name, value] : data.params) {
    if (!params.contains(name)) throw VersionError("checkpoint parameter " + name + " unknown to model");
    Parameter& p = params.at(name);
    if (p.value.shape() != value.shape())
      throw VersionError("checkpoint parameter " + name + " has shape " + to_string(value.shape()) +
                         ", model expects " + to_string(p.value.shape()));
    p.value = value;
  }
}

}  // namespace cfie::num
