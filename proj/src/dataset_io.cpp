#include <bit>
#include <cstring>
#include <fstream>

#include "uwer/channel.hpp"

namespace uwer::channel {

static_assert(std::endian::native == std::endian::little, "UWER1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'U', 'W', 'E', 'R', 'D', 'S', '0', '1'};

class HashingWriter {
 public:
  explicit HashingWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void put(const T& value) {
    write(&value, sizeof(T));
  }
  void write(const void* data, std::size_t bytes) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    hash_ = math::fnv1a64(std::span(static_cast<const std::byte*>(data), bytes), hash_);
  }
  std::uint64_t finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed");
    return hash_;
  }

 private:
  std::ofstream out_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw std::runtime_error("cannot open " + path_);
  }
  template <typename T>
  T get() {
    T value{};
    read(&value, sizeof(T));
    return value;
  }
  void read(void* data, std::size_t bytes) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes) throw std::runtime_error(path_ + ": truncated file");
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  std::string path_;
};

}  // namespace

std::uint64_t write_dataset(const CsiDataset& dataset, const std::filesystem::path& path) {
  const ChannelConfig& cfg = dataset.config();
  HashingWriter out(path);
  out.write(kMagic, sizeof(kMagic));
  out.put(static_cast<std::uint32_t>(dataset.window_count()));
  out.put(static_cast<std::uint32_t>(cfg.lookback));
  out.put(static_cast<std::uint32_t>(cfg.n_tx));
  out.put(static_cast<std::uint32_t>(cfg.n_rb));
  out.put(static_cast<std::uint32_t>(cfg.n_rx));
  out.put(static_cast<std::uint32_t>(cfg.env_count()));
  out.put(dataset.norm_scale());
  out.write(dataset.env_ids().data(), dataset.env_ids().size_bytes());
  for (std::size_t i = 0; i < dataset.window_count(); ++i) out.write(dataset.x(i).data(), dataset.x(i).size_bytes());
  for (std::size_t i = 0; i < dataset.window_count(); ++i) out.write(dataset.y(i).data(), dataset.y(i).size_bytes());
  return out.finish();
}

CsiDataset read_dataset(const std::filesystem::path& path, const ChannelConfig& config) {
  Reader in(path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error(path.string() + ": bad magic");

  const auto windows = in.get<std::uint32_t>();
  const auto lookback = in.get<std::uint32_t>();
  const auto n_tx = in.get<std::uint32_t>();
  const auto n_rb = in.get<std::uint32_t>();
  const auto n_rx = in.get<std::uint32_t>();
  const auto envs = in.get<std::uint32_t>();
  const auto norm_scale = in.get<double>();

  auto mismatch = [&](const char* field, std::uint64_t file_value, std::uint64_t cfg_value) {
    if (file_value != cfg_value)
      throw std::runtime_error(path.string() + ": header " + field + "=" + std::to_string(file_value) +
                               " disagrees with config " + std::to_string(cfg_value));
  };
  mismatch("T", lookback, static_cast<std::uint64_t>(config.lookback));
  mismatch("N_t", n_tx, static_cast<std::uint64_t>(config.n_tx));
  mismatch("N_rb", n_rb, static_cast<std::uint64_t>(config.n_rb));
  mismatch("N_r", n_rx, static_cast<std::uint64_t>(config.n_rx));
  mismatch("env_count", envs, static_cast<std::uint64_t>(config.env_count()));
  mismatch("N_w", windows, static_cast<std::uint64_t>(config.n_samples - config.lookback));

  std::vector<std::uint16_t> env_ids(windows);
  in.read(env_ids.data(), env_ids.size() * sizeof(std::uint16_t));
  for (auto e : env_ids)
    if (e >= envs) throw std::runtime_error(path.string() + ": env id out of range");

  // The x tensor is a sequence of overlapping windows; rebuild the frame
  // stream and insist every window agrees with it.
  const std::size_t fsize = config.frame_size();
  std::vector<float> frames;
  frames.reserve((static_cast<std::size_t>(windows) + lookback) * fsize);
  std::vector<float> buf(static_cast<std::size_t>(lookback) * fsize);
  for (std::size_t i = 0; i < windows; ++i) {
    in.read(buf.data(), buf.size() * sizeof(float));
    if (i == 0) {
      frames.insert(frames.end(), buf.begin(), buf.end());
      continue;
    }
    const float* expected = frames.data() + i * fsize;
    if (std::memcmp(buf.data(), expected, (lookback - 1) * fsize * sizeof(float)) != 0)
      throw std::runtime_error(path.string() + ": window " + std::to_string(i) + " is not a sliding continuation");
    frames.insert(frames.end(), buf.end() - static_cast<std::ptrdiff_t>(fsize), buf.end());
  }
  std::vector<float> target(fsize);
  for (std::size_t i = 0; i < windows; ++i) {
    in.read(target.data(), fsize * sizeof(float));
    if (i + 1 < windows) {
      if (std::memcmp(target.data(), frames.data() + (i + lookback) * fsize, fsize * sizeof(float)) != 0)
        throw std::runtime_error(path.string() + ": target " + std::to_string(i) + " disagrees with next window");
    } else {
      frames.insert(frames.end(), target.begin(), target.end());
    }
  }
  if (!in.at_end()) throw std::runtime_error(path.string() + ": trailing bytes");
  return CsiDataset(config, std::move(frames), std::move(env_ids), norm_scale);
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    hash = math::fnv1a64(std::as_bytes(std::span(buf.data(), got)), hash);
  }
  return hash;
}

}  // namespace uwer::channel
