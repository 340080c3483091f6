#include "uwer/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "uwer/mathcore.hpp"

namespace uwer::config {

using channel::ConfigError;

Json to_json(const channel::ChannelConfig& c) {
  Json j;
  j["carrier_hz"] = c.carrier_hz;
  j["bandwidth_hz"] = c.bandwidth_hz;
  j["n_tx"] = c.n_tx;
  j["n_rx"] = c.n_rx;
  j["n_rb"] = c.n_rb;
  j["subcarrier_spacing_hz"] = c.subcarrier_spacing_hz;
  j["sample_interval_s"] = c.sample_interval_s;
  j["n_paths"] = c.n_paths;
  j["tap_spacing_s"] = c.tap_spacing_s;
  j["rms_delay_spread_s"] = c.rms_delay_spread_s;
  j["antenna_spacing_wavelengths"] = c.antenna_spacing_wavelengths;
  j["lookback"] = c.lookback;
  j["n_samples"] = c.n_samples;
  j["env_speeds_kmh"] = c.env_speeds_kmh;
  j["seed"] = c.seed;
  return j;
}

Json to_json(const train::TrainConfig& c) {
  Json j;
  j["lambda"] = c.lambda;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["beta"] = c.beta;
  j["capacity"] = c.capacity;
  j["k_passes"] = c.k_passes;
  j["batch"] = c.batch;
  j["lr"] = c.lr;
  j["epochs_per_task"] = c.epochs_per_task;
  j["seeds"] = c.seeds;
  j["policy"] = train::to_string(c.policy);
  j["n_layers"] = c.n_layers;
  j["hidden"] = c.hidden;
  j["dropout"] = c.dropout;
  if (c.grad_passes == train::GradPasses::All)
    j["grad_passes"] = "K";
  else
    j["grad_passes"] = 1;
  j["refresh_every_n_updates"] = c.refresh_every_n_updates;
  j["val_fraction"] = c.val_fraction;
  return j;
}

namespace {

class Reader {
 public:
  Reader(const Json& j, std::string prefix, std::set<std::string> known) : j_(j), prefix_(std::move(prefix)) {
    if (!j.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "expected a JSON object");
    for (const auto& [key, value] : j.items())
      if (!known.count(key)) throw ConfigError(prefix_ + key, "unknown field");
  }

  template <typename T>
  void get(const char* key, T& out) const {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError(prefix_ + key, "expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_unsigned() || it->template get<std::int64_t>() >= 0) {
            out = it->template get<T>();
            return;
          }
          throw ConfigError(prefix_ + key, "expected a non-negative integer");
        } else {
          out = it->template get<T>();
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError(prefix_ + key, "expected a number");
        out = it->template get<T>();
      } else {
        out = it->template get<T>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(prefix_ + key, e.what());
    }
  }

  const Json* find(const char* key) const {
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string name(const char* key) const { return prefix_ + key; }

 private:
  const Json& j_;
  std::string prefix_;
};

}  // namespace

channel::ChannelConfig channel_from_json(const Json& j, channel::ChannelConfig c, const std::string& prefix) {
  const Reader r(j, prefix,
                 {"carrier_hz", "bandwidth_hz", "n_tx", "n_rx", "n_rb", "subcarrier_spacing_hz", "sample_interval_s",
                  "n_paths", "tap_spacing_s", "rms_delay_spread_s", "antenna_spacing_wavelengths", "lookback",
                  "n_samples", "env_speeds_kmh", "seed"});
  r.get("carrier_hz", c.carrier_hz);
  r.get("bandwidth_hz", c.bandwidth_hz);
  r.get("n_tx", c.n_tx);
  r.get("n_rx", c.n_rx);
  r.get("n_rb", c.n_rb);
  r.get("subcarrier_spacing_hz", c.subcarrier_spacing_hz);
  r.get("sample_interval_s", c.sample_interval_s);
  r.get("n_paths", c.n_paths);
  r.get("tap_spacing_s", c.tap_spacing_s);
  r.get("rms_delay_spread_s", c.rms_delay_spread_s);
  r.get("antenna_spacing_wavelengths", c.antenna_spacing_wavelengths);
  r.get("lookback", c.lookback);
  r.get("n_samples", c.n_samples);
  if (const Json* v = r.find("env_speeds_kmh")) {
    if (!v->is_array()) throw ConfigError(r.name("env_speeds_kmh"), "expected an array of numbers");
    c.env_speeds_kmh.clear();
    for (const auto& x : *v) {
      if (!x.is_number()) throw ConfigError(r.name("env_speeds_kmh"), "expected an array of numbers");
      c.env_speeds_kmh.push_back(x.get<double>());
    }
  }
  r.get("seed", c.seed);
  return c;
}

train::TrainConfig train_from_json(const Json& j, train::TrainConfig c, const std::string& prefix) {
  const Reader r(j, prefix,
                 {"lambda", "alpha", "gamma", "beta", "capacity", "k_passes", "batch", "lr", "epochs_per_task", "seeds",
                  "policy", "n_layers", "hidden", "dropout", "grad_passes", "refresh_every_n_updates", "val_fraction"});
  r.get("lambda", c.lambda);
  r.get("alpha", c.alpha);
  r.get("gamma", c.gamma);
  r.get("beta", c.beta);
  r.get("capacity", c.capacity);
  r.get("k_passes", c.k_passes);
  r.get("batch", c.batch);
  r.get("lr", c.lr);
  r.get("epochs_per_task", c.epochs_per_task);
  if (const Json* v = r.find("seeds")) {
    if (!v->is_array()) throw ConfigError(r.name("seeds"), "expected an array of non-negative integers");
    c.seeds.clear();
    for (const auto& x : *v) {
      if (!x.is_number_integer() || (!x.is_number_unsigned() && x.get<std::int64_t>() < 0))
        throw ConfigError(r.name("seeds"), "expected an array of non-negative integers");
      c.seeds.push_back(x.get<std::uint64_t>());
    }
  }
  if (const Json* v = r.find("policy")) {
    if (!v->is_string()) throw ConfigError(r.name("policy"), "expected a string");
    try {
      c.policy = train::parse_policy(v->get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(r.name("policy"), "unknown policy '" + v->get<std::string>() + "'");
    }
  }
  r.get("n_layers", c.n_layers);
  r.get("hidden", c.hidden);
  r.get("dropout", c.dropout);
  if (const Json* v = r.find("grad_passes")) {
    if (v->is_string() && v->get<std::string>() == "K")
      c.grad_passes = train::GradPasses::All;
    else if (v->is_number_integer() && v->get<std::int64_t>() == 1)
      c.grad_passes = train::GradPasses::First;
    else
      throw ConfigError(r.name("grad_passes"), "expected \"K\" or 1");
  }
  r.get("refresh_every_n_updates", c.refresh_every_n_updates);
  r.get("val_fraction", c.val_fraction);
  return c;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

std::uint64_t json_hash(const Json& j) { return math::fnv1a64(j.dump()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace uwer::config
