#include <cstring>
#include <fstream>
#include <stdexcept>

#include "uwer/model.hpp"

namespace uwer::model {

namespace {

constexpr char kMagic[8] = {'U', 'W', 'E', 'R', 'C', 'K', '0', '1'};

template <typename T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != sizeof(T)) throw std::runtime_error(path.string() + ": truncated checkpoint");
  return value;
}

void put_real32(std::ofstream& out, std::span<const double> values) {
  std::vector<float> buf(values.begin(), values.end());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void get_real32(std::ifstream& in, std::span<double> values, const std::filesystem::path& path) {
  std::vector<float> buf(values.size());
  const auto bytes = static_cast<std::streamsize>(buf.size() * sizeof(float));
  in.read(reinterpret_cast<char*>(buf.data()), bytes);
  if (in.gcount() != bytes) throw std::runtime_error(path.string() + ": truncated checkpoint");
  std::copy(buf.begin(), buf.end(), values.begin());
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const LstmPredictor& model, const AdamState& adam) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const ModelDims& d = model.dims();
  out.write(kMagic, sizeof(kMagic));
  put(out, static_cast<std::uint32_t>(d.n_layers));
  put(out, static_cast<std::uint32_t>(d.hidden));
  put(out, static_cast<std::uint32_t>(d.in_dim));
  put(out, static_cast<std::uint32_t>(d.out_dim));
  put(out, model.dropout_rate());
  put(out, static_cast<std::uint64_t>(adam.step));
  put_real32(out, model.params());
  const std::size_t n = model.params().size();
  const ParamVector zeros(n, 0.0);
  put_real32(out, adam.m.size() == n ? std::span<const double>(adam.m) : std::span<const double>(zeros));
  put_real32(out, adam.v.size() == n ? std::span<const double>(adam.v) : std::span<const double>(zeros));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path.string() + ": not a UWERCK01 checkpoint");
  ModelDims d;
  d.n_layers = static_cast<int>(get<std::uint32_t>(in, path));
  d.hidden = static_cast<int>(get<std::uint32_t>(in, path));
  d.in_dim = static_cast<int>(get<std::uint32_t>(in, path));
  d.out_dim = static_cast<int>(get<std::uint32_t>(in, path));
  const auto dropout = get<double>(in, path);
  const auto step = get<std::uint64_t>(in, path);

  Checkpoint ck{LstmPredictor(d, dropout), AdamState::zeros(ParamLayout(d).size())};
  ck.adam.step = step;
  get_real32(in, ck.model.params(), path);
  get_real32(in, ck.adam.m, path);
  get_real32(in, ck.adam.v, path);
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path.string() + ": trailing bytes");
  return ck;
}

}  // namespace uwer::model
