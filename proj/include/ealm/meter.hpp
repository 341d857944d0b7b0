// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

// Energy and carbon accounting for measured spans.
//
// A Meter owns one power source and one clock. While a span is open the
// source is polled at the sampling interval; the samples are integrated per
// domain with the trapezoidal rule when the span closes.
//
// Sources:
//   constant  fixed watts per domain
//   trace     piecewise-linear replay of a `timestamp_s,domain,watts` CSV
//   powercap  OS energy counters (energy_uj + max_energy_range_uj)
//
// Clocks: the wall clock measures real elapsed time; the modeled clock only
// moves when work is charged to it (WorkCost converts operation counts to
// seconds), which makes synthetic sources fully deterministic.

#ifndef EALM_METER_HPP_
#define EALM_METER_HPP_

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ealm/error.hpp"

namespace ealm::meter {

enum class Domain { kCpu = 0, kRam = 1, kGpu = 2 };
inline constexpr std::array<Domain, 3> kDomains = {Domain::kCpu, Domain::kRam, Domain::kGpu};

inline std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::kCpu: return "cpu";
    case Domain::kRam: return "ram";
    case Domain::kGpu: return "gpu";
  }
  return "?";
}

inline Domain parse_domain(std::string_view s) {
  if (s == "cpu") return Domain::kCpu;
  if (s == "ram") return Domain::kRam;
  if (s == "gpu") return Domain::kGpu;
  fail(ErrorKind::kInput, "unknown power domain '" + std::string(s) + "'");
}

struct PowerSample {
  double t = 0.0;  // seconds on the meter clock
  double watts = 0.0;
  Domain domain = Domain::kCpu;
};

using DomainJoules = std::array<double, 3>;

/// Trapezoidal integration per domain. Timestamps must not decrease within a
/// domain; a domain with a single sample contributes zero.
inline DomainJoules integrate_by_domain(std::span<const PowerSample> samples) {
  DomainJoules joules{};
  std::array<std::optional<PowerSample>, 3> last;
  for (const PowerSample& s : samples) {
    auto& prev = last[static_cast<std::size_t>(s.domain)];
    if (prev) {
      if (s.t < prev->t) {
        fail(ErrorKind::kOrdering, "timestamp " + std::to_string(s.t) + " precedes " +
                                       std::to_string(prev->t) + " in domain " +
                                       std::string(domain_name(s.domain)));
      }
      joules[static_cast<std::size_t>(s.domain)] += 0.5 * (prev->watts + s.watts) * (s.t - prev->t);
    }
    prev = s;
  }
  return joules;
}

/// Total joules over all domains.
inline double integrate(std::span<const PowerSample> samples) {
  if (samples.empty()) fail(ErrorKind::kInput, "integrate needs at least one sample");
  const DomainJoules j = integrate_by_domain(samples);
  return j[0] + j[1] + j[2];
}

inline double joules_to_kwh(double joules) { return joules / 3.6e6; }

inline double to_co2e(double kwh, double intensity) {
  if (kwh < 0.0 || intensity < 0.0) {
    fail(ErrorKind::kInput, "energy and carbon intensity must be non-negative");
  }
  return kwh * intensity;
}

struct EnergyReport {
  DomainJoules joules{};
  double total_joules = 0.0;
  double duration_s = 0.0;
  double kwh = 0.0;
  double co2e_kg = 0.0;
  double carbon_intensity = 0.475;
  std::string source = "none";

  static EnergyReport make(const DomainJoules& joules, double duration_s, double intensity,
                           std::string source) {
    EnergyReport r;
    r.joules = joules;
    r.total_joules = joules[0] + joules[1] + joules[2];
    r.duration_s = duration_s;
    r.kwh = joules_to_kwh(r.total_joules);
    r.co2e_kg = to_co2e(r.kwh, intensity);
    r.carbon_intensity = intensity;
    r.source = std::move(source);
    return r;
  }

  double domain_joules(Domain d) const { return joules[static_cast<std::size_t>(d)]; }

  EnergyReport& operator+=(const EnergyReport& o) {
    for (std::size_t i = 0; i < joules.size(); ++i) joules[i] += o.joules[i];
    *this = make(joules, duration_s + o.duration_s, o.carbon_intensity,
                 source == "none" ? o.source : source);
    return *this;
  }

  bool operator==(const EnergyReport&) const = default;
};

inline void to_json(nlohmann::json& j, const EnergyReport& r) {
  j = nlohmann::json{{"cpu_j", r.joules[0]},
                     {"ram_j", r.joules[1]},
                     {"gpu_j", r.joules[2]},
                     {"total_j", r.total_joules},
                     {"duration_s", r.duration_s},
                     {"kwh", r.kwh},
                     {"co2e_kg", r.co2e_kg},
                     {"carbon_intensity", r.carbon_intensity},
                     {"source", r.source}};
}

inline void from_json(const nlohmann::json& j, EnergyReport& r) {
  r.joules = {j.at("cpu_j").get<double>(), j.at("ram_j").get<double>(),
              j.at("gpu_j").get<double>()};
  r.total_joules = j.at("total_j").get<double>();
  r.duration_s = j.at("duration_s").get<double>();
  r.kwh = j.at("kwh").get<double>();
  r.co2e_kg = j.at("co2e_kg").get<double>();
  r.carbon_intensity = j.at("carbon_intensity").get<double>();
  r.source = j.value("source", std::string("none"));
}

// ---------------------------------------------------------------------------
// powercap counters

inline std::uint64_t read_counter_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    fail(ErrorKind::kSource, "cannot read energy counter '" + path.string() +
                                 "'; use --meter constant or --meter trace:<csv> instead");
  }
  std::uint64_t v = 0;
  if (!(in >> v)) {
    fail(ErrorKind::kSource, "energy counter '" + path.string() + "' is not an integer");
  }
  return v;
}

/// Reads a microjoule counter (an energy_uj file).
inline std::uint64_t read_powercap_counter(const std::filesystem::path& path) {
  return read_counter_file(path);
}

/// Difference of two counter readings; a smaller current value means the
/// counter wrapped at `max_range`.
inline std::uint64_t counter_delta(std::uint64_t prev, std::uint64_t curr,
                                   std::uint64_t max_range) {
  if (curr >= prev) return curr - prev;
  return (max_range - prev) + curr;
}

// ---------------------------------------------------------------------------
// Work cost model

/// Operation counts of a piece of model work.
struct Workload {
  double macs = 0.0;
  double skipped_macs = 0.0;  // MACs against exactly-zero weights
  double weight_bytes = 0.0;  // stored weight bytes streamed
  double dequant_4 = 0.0;     // elements widened from each storage width
  double dequant_8 = 0.0;
  double dequant_16 = 0.0;

  Workload& operator+=(const Workload& o) {
    macs += o.macs;
    skipped_macs += o.skipped_macs;
    weight_bytes += o.weight_bytes;
    dequant_4 += o.dequant_4;
    dequant_8 += o.dequant_8;
    dequant_16 += o.dequant_16;
    return *this;
  }

  Workload scaled(double f) const {
    return {macs * f, skipped_macs * f, weight_bytes * f, dequant_4 * f, dequant_8 * f,
            dequant_16 * f};
  }
};

/// Seconds per unit of work on the modeled clock. Zero-weight MACs are free;
/// low-bit storage saves bandwidth but pays for widening.
struct WorkCost {
  double seconds_per_mac = 2e-9;
  double seconds_per_weight_byte = 1e-9;
  double seconds_per_dequant_4 = 1.5e-9;
  double seconds_per_dequant_8 = 1.0e-9;
  double seconds_per_dequant_16 = 0.25e-9;

  double seconds(const Workload& w) const {
    return seconds_per_mac * (w.macs - w.skipped_macs) +
           seconds_per_weight_byte * w.weight_bytes + seconds_per_dequant_4 * w.dequant_4 +
           seconds_per_dequant_8 * w.dequant_8 + seconds_per_dequant_16 * w.dequant_16;
  }
};

inline void to_json(nlohmann::json& j, const WorkCost& c) {
  j = nlohmann::json{{"seconds_per_mac", c.seconds_per_mac},
                     {"seconds_per_weight_byte", c.seconds_per_weight_byte},
                     {"seconds_per_dequant_4", c.seconds_per_dequant_4},
                     {"seconds_per_dequant_8", c.seconds_per_dequant_8},
                     {"seconds_per_dequant_16", c.seconds_per_dequant_16}};
}

inline void from_json(const nlohmann::json& j, WorkCost& c) {
  WorkCost d;
  c.seconds_per_mac = j.value("seconds_per_mac", d.seconds_per_mac);
  c.seconds_per_weight_byte = j.value("seconds_per_weight_byte", d.seconds_per_weight_byte);
  c.seconds_per_dequant_4 = j.value("seconds_per_dequant_4", d.seconds_per_dequant_4);
  c.seconds_per_dequant_8 = j.value("seconds_per_dequant_8", d.seconds_per_dequant_8);
  c.seconds_per_dequant_16 = j.value("seconds_per_dequant_16", d.seconds_per_dequant_16);
}

// ---------------------------------------------------------------------------
// Clocks

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  virtual bool modeled() const = 0;
  virtual void advance(double /*seconds*/) {}
};

class WallClock final : public Clock {
 public:
  WallClock() : origin_(std::chrono::steady_clock::now()) {}
  double now() const override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
  }
  bool modeled() const override { return false; }

 private:
  std::chrono::steady_clock::time_point origin_;
};

class ModeledClock final : public Clock {
 public:
  double now() const override { return t_; }
  bool modeled() const override { return true; }
  void advance(double seconds) override {
    if (!(seconds >= 0.0)) fail(ErrorKind::kUsage, "modeled time cannot move backwards");
    t_ += seconds;
  }

 private:
  double t_ = 0.0;
};

// ---------------------------------------------------------------------------
// Sources

class PowerSource {
 public:
  virtual ~PowerSource() = default;
  virtual std::string name() const = 0;
  /// Emits samples for time t. Calls arrive in non-decreasing t order.
  virtual void poll(double t, std::vector<PowerSample>& out) = 0;
  /// Times in (t0, t1) where the power curve has a kink; sampling there makes
  /// trapezoidal integration exact.
  virtual std::vector<double> breakpoints(double /*t0*/, double /*t1*/) const { return {}; }
};

class ConstantPowerSource final : public PowerSource {
 public:
  explicit ConstantPowerSource(std::array<double, 3> watts) : watts_(watts) {
    for (double w : watts_) {
      if (w < 0.0) fail(ErrorKind::kConfig, "constant power must be non-negative");
    }
  }
  std::string name() const override { return "constant"; }
  void poll(double t, std::vector<PowerSample>& out) override {
    for (Domain d : kDomains) out.push_back({t, watts_[static_cast<std::size_t>(d)], d});
  }

 private:
  std::array<double, 3> watts_;
};

/// Replays a recorded power trace, interpolating linearly between samples and
/// holding the end values outside the recorded range.
class TraceReplaySource final : public PowerSource {
 public:
  explicit TraceReplaySource(std::vector<PowerSample> samples) {
    for (const PowerSample& s : samples) {
      if (s.watts < 0.0) fail(ErrorKind::kInput, "trace contains negative watts");
      auto& series = series_[static_cast<std::size_t>(s.domain)];
      if (!series.empty() && s.t < series.back().t) {
        fail(ErrorKind::kOrdering, "trace timestamps decrease in domain " +
                                       std::string(domain_name(s.domain)));
      }
      series.push_back(s);
    }
  }

  std::string name() const override { return "trace"; }

  double watts_at(Domain d, double t) const {
    const auto& series = series_[static_cast<std::size_t>(d)];
    if (series.empty()) return 0.0;
    if (t <= series.front().t) return series.front().watts;
    if (t >= series.back().t) return series.back().watts;
    auto it = std::upper_bound(series.begin(), series.end(), t,
                               [](double v, const PowerSample& s) { return v < s.t; });
    const PowerSample& hi = *it;
    const PowerSample& lo = *(it - 1);
    if (hi.t == lo.t) return hi.watts;
    return lo.watts + (hi.watts - lo.watts) * (t - lo.t) / (hi.t - lo.t);
  }

  void poll(double t, std::vector<PowerSample>& out) override {
    for (Domain d : kDomains) {
      if (!series_[static_cast<std::size_t>(d)].empty()) out.push_back({t, watts_at(d, t), d});
    }
  }

  std::vector<double> breakpoints(double t0, double t1) const override {
    std::vector<double> out;
    for (const auto& series : series_) {
      for (const PowerSample& s : series) {
        if (s.t > t0 && s.t < t1) out.push_back(s.t);
      }
    }
    return out;
  }

 private:
  std::array<std::vector<PowerSample>, 3> series_;
};

/// Parses `timestamp_s,domain,watts` lines; a header line and blank lines are
/// skipped.
inline std::vector<PowerSample> parse_trace(std::istream& in, const std::string& origin) {
  std::vector<PowerSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line_no == 1 && line.starts_with("timestamp")) continue;
    std::stringstream ss(line);
    std::string ts, dom, w;
    if (!std::getline(ss, ts, ',') || !std::getline(ss, dom, ',') || !std::getline(ss, w)) {
      fail(ErrorKind::kInput, origin + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    try {
      out.push_back({std::stod(ts), std::stod(w), parse_domain(dom)});
    } catch (const std::logic_error&) {
      fail(ErrorKind::kInput, origin + ":" + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

inline std::vector<PowerSample> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kSource, "cannot open power trace '" + path + "'");
  return parse_trace(in, path);
}

/// Reads OS power-capping counters. Each configured domain directory holds
/// `energy_uj` and `max_energy_range_uj`.
class PowercapSource final : public PowerSource {
 public:
  explicit PowercapSource(std::map<Domain, std::filesystem::path> dirs) {
    if (dirs.empty()) fail(ErrorKind::kSource, "no powercap domains configured");
    for (const auto& [domain, dir] : dirs) {
      Channel c;
      c.domain = domain;
      c.counter = dir / "energy_uj";
      c.max_range = read_counter_file(dir / "max_energy_range_uj");
      read_counter_file(c.counter);
      channels_.push_back(std::move(c));
    }
  }

  std::string name() const override { return "powercap"; }

  void poll(double t, std::vector<PowerSample>& out) override {
    for (Channel& c : channels_) {
      const std::uint64_t now = read_counter_file(c.counter);
      if (c.prev_t) {
        c.pending_uj += counter_delta(c.prev_value, now, c.max_range);
        const double dt = t - *c.prev_t;
        if (dt > 0.0) {
          // Average power over the interval, emitted at both ends so the
          // trapezoid reproduces the counted energy.
          const double watts = static_cast<double>(c.pending_uj) * 1e-6 / dt;
          out.push_back({*c.prev_t, watts, c.domain});
          out.push_back({t, watts, c.domain});
          c.pending_uj = 0;
          c.prev_t = t;
        }
      } else {
        c.prev_t = t;
      }
      c.prev_value = now;
    }
  }

 private:
  struct Channel {
    Domain domain = Domain::kCpu;
    std::filesystem::path counter;
    std::uint64_t max_range = 0;
    std::uint64_t prev_value = 0;
    std::uint64_t pending_uj = 0;
    std::optional<double> prev_t;
  };
  std::vector<Channel> channels_;
};

// ---------------------------------------------------------------------------
// Meter

enum class SourceKind { kConstant, kTrace, kPowercap };
enum class ClockKind { kAuto, kWall, kModeled };

struct MeterConfig {
  SourceKind source = SourceKind::kConstant;
  double sampling_interval_s = 0.1;
  std::array<double, 3> constant_watts = {15.0, 3.0, 0.0};  // cpu, ram, gpu
  std::string trace_path;
  double carbon_intensity = 0.475;  // kgCO2e per kWh
  ClockKind clock = ClockKind::kAuto;  // auto: wall for powercap, modeled otherwise
  std::map<Domain, std::filesystem::path> powercap_dirs = {
      {Domain::kCpu, "/sys/class/powercap/intel-rapl:0"}};
  bool fallback_to_constant = false;
  WorkCost work_cost;

  void validate() const {
    if (!(sampling_interval_s > 0.0)) {
      fail(ErrorKind::kConfig, "sampling_interval_s must be > 0");
    }
    if (carbon_intensity < 0.0) fail(ErrorKind::kConfig, "carbon_intensity must be >= 0");
  }
};

/// Parses the command-line form `powercap`, `constant` or `trace:<path>`.
inline void apply_meter_flag(MeterConfig& cfg, std::string_view flag) {
  if (flag == "powercap") {
    cfg.source = SourceKind::kPowercap;
  } else if (flag == "constant") {
    cfg.source = SourceKind::kConstant;
  } else if (flag.starts_with("trace:") && flag.size() > 6) {
    cfg.source = SourceKind::kTrace;
    cfg.trace_path = std::string(flag.substr(6));
  } else {
    fail(ErrorKind::kConfig, "unknown meter '" + std::string(flag) +
                                 "' (expected powercap, constant or trace:<path>)");
  }
}

inline std::string_view source_kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::kConstant: return "constant";
    case SourceKind::kTrace: return "trace";
    case SourceKind::kPowercap: return "powercap";
  }
  return "?";
}

inline void to_json(nlohmann::json& j, const MeterConfig& c) {
  j = nlohmann::json{{"source", source_kind_name(c.source)},
                     {"sampling_interval_s", c.sampling_interval_s},
                     {"constant_watts", {{"cpu", c.constant_watts[0]},
                                         {"ram", c.constant_watts[1]},
                                         {"gpu", c.constant_watts[2]}}},
                     {"trace_path", c.trace_path},
                     {"carbon_intensity", c.carbon_intensity},
                     {"clock", c.clock == ClockKind::kAuto    ? "auto"
                               : c.clock == ClockKind::kWall ? "wall"
                                                             : "modeled"},
                     {"fallback_to_constant", c.fallback_to_constant},
                     {"work_cost", c.work_cost}};
  nlohmann::json dirs = nlohmann::json::object();
  for (const auto& [d, p] : c.powercap_dirs) dirs[std::string(domain_name(d))] = p.string();
  j["powercap_dirs"] = dirs;
}

inline void from_json(const nlohmann::json& j, MeterConfig& c) {
  MeterConfig d;
  c = d;
  if (j.contains("source")) {
    const std::string s = j["source"].get<std::string>();
    if (s == "constant") c.source = SourceKind::kConstant;
    else if (s == "trace") c.source = SourceKind::kTrace;
    else if (s == "powercap") c.source = SourceKind::kPowercap;
    else fail(ErrorKind::kConfig, "unknown meter source '" + s + "'");
  }
  c.sampling_interval_s = j.value("sampling_interval_s", d.sampling_interval_s);
  if (j.contains("constant_watts")) {
    const auto& w = j["constant_watts"];
    c.constant_watts = {w.value("cpu", d.constant_watts[0]), w.value("ram", d.constant_watts[1]),
                        w.value("gpu", d.constant_watts[2])};
  }
  c.trace_path = j.value("trace_path", d.trace_path);
  c.carbon_intensity = j.value("carbon_intensity", d.carbon_intensity);
  if (j.contains("clock")) {
    const std::string s = j["clock"].get<std::string>();
    if (s == "auto") c.clock = ClockKind::kAuto;
    else if (s == "wall") c.clock = ClockKind::kWall;
    else if (s == "modeled") c.clock = ClockKind::kModeled;
    else fail(ErrorKind::kConfig, "unknown clock '" + s + "'");
  }
  c.fallback_to_constant = j.value("fallback_to_constant", d.fallback_to_constant);
  if (j.contains("work_cost")) c.work_cost = j["work_cost"].get<WorkCost>();
  if (j.contains("powercap_dirs")) {
    c.powercap_dirs.clear();
    for (const auto& [k, v] : j["powercap_dirs"].items()) {
      c.powercap_dirs[parse_domain(k)] = v.get<std::string>();
    }
  }
}

/// Opaque token for an open span; obtained from Meter::start_span.
class SpanHandle {
 public:
  SpanHandle(SpanHandle&& o) noexcept : id_(std::exchange(o.id_, 0)) {}
  SpanHandle& operator=(SpanHandle&& o) noexcept {
    id_ = std::exchange(o.id_, 0);
    return *this;
  }
  SpanHandle(const SpanHandle&) = delete;
  SpanHandle& operator=(const SpanHandle&) = delete;

 private:
  friend class Meter;
  explicit SpanHandle(std::uint64_t id) : id_(id) {}
  std::uint64_t id_ = 0;
};

class Meter {
 public:
  explicit Meter(MeterConfig config) : config_(std::move(config)) {
    config_.validate();
    switch (config_.source) {
      case SourceKind::kConstant:
        source_ = std::make_unique<ConstantPowerSource>(config_.constant_watts);
        break;
      case SourceKind::kTrace:
        source_ = std::make_unique<TraceReplaySource>(load_trace(config_.trace_path));
        break;
      case SourceKind::kPowercap:
        try {
          source_ = std::make_unique<PowercapSource>(config_.powercap_dirs);
        } catch (const Error& e) {
          if (!config_.fallback_to_constant) throw;
          source_ = std::make_unique<ConstantPowerSource>(config_.constant_watts);
          fallback_reason_ = e.what();
        }
        break;
    }
    const bool modeled = config_.clock == ClockKind::kModeled ||
                         (config_.clock == ClockKind::kAuto &&
                          config_.source != SourceKind::kPowercap);
    if (modeled) {
      clock_ = std::make_unique<ModeledClock>();
    } else {
      clock_ = std::make_unique<WallClock>();
    }
  }

  /// Meter over a caller-provided source (tests, custom telemetry).
  Meter(MeterConfig config, std::unique_ptr<PowerSource> source, std::unique_ptr<Clock> clock)
      : config_(std::move(config)), source_(std::move(source)), clock_(std::move(clock)) {
    config_.validate();
  }

  ~Meter() { stop_sampler(); }
  Meter(const Meter&) = delete;
  Meter& operator=(const Meter&) = delete;

  const MeterConfig& config() const { return config_; }
  bool modeled_clock() const { return clock_->modeled(); }
  std::string source_name() const { return source_->name(); }
  const std::string& fallback_reason() const { return fallback_reason_; }
  double now() const { return clock_->now(); }

  /// Moves the modeled clock; ignored under the wall clock.
  void charge_seconds(double seconds) {
    if (clock_->modeled()) clock_->advance(seconds);
  }
  void charge(const Workload& w) { charge_seconds(config_.work_cost.seconds(w)); }
  double seconds_for(const Workload& w) const { return config_.work_cost.seconds(w); }

  SpanHandle start_span() {
    if (active_id_ != 0) fail(ErrorKind::kUsage, "an energy span is already open on this meter");
    if (open_spans_global().fetch_add(1) + 1 > 1) {
      open_spans_global().fetch_sub(1);
      fail(ErrorKind::kUsage, "another meter has an open span; metered work must not overlap");
    }
    active_id_ = ++next_id_;
    samples_.clear();
    t0_ = clock_->now();
    source_->poll(t0_, samples_);
    if (!clock_->modeled()) start_sampler();
    return SpanHandle(active_id_);
  }

  EnergyReport stop_span(SpanHandle handle) {
    if (handle.id_ == 0 || handle.id_ != active_id_) {
      fail(ErrorKind::kUsage, "stop_span called with a handle that is not the open span");
    }
    std::vector<PowerSample> samples = std::move(samples_);
    samples_.clear();
    const double t1 = clock_->now();
    if (clock_->modeled()) {
      std::vector<double> times = source_->breakpoints(t0_, t1);
      const double dt = config_.sampling_interval_s;
      for (std::size_t k = 1;; ++k) {
        const double t = t0_ + static_cast<double>(k) * dt;
        if (t >= t1) break;
        times.push_back(t);
      }
      std::sort(times.begin(), times.end());
      times.erase(std::unique(times.begin(), times.end()), times.end());
      for (double t : times) source_->poll(t, samples);
    } else {
      stop_sampler();
      std::lock_guard lock(channel_mutex_);
      samples.insert(samples.end(), channel_.begin(), channel_.end());
      channel_.clear();
    }
    if (t1 > t0_ || samples.empty()) source_->poll(t1, samples);
    active_id_ = 0;
    open_spans_global().fetch_sub(1);
    // Stable sort keeps per-domain order for equal timestamps.
    std::stable_sort(samples.begin(), samples.end(),
                     [](const PowerSample& a, const PowerSample& b) { return a.t < b.t; });
    return EnergyReport::make(integrate_by_domain(samples), t1 - t0_, config_.carbon_intensity,
                              source_->name());
  }

  bool span_open() const { return active_id_ != 0; }

  /// Number of spans open across every meter in the process.
  static int open_spans() { return open_spans_global().load(); }

 private:
  static std::atomic<int>& open_spans_global() {
    static std::atomic<int> count{0};
    return count;
  }

  void start_sampler() {
    {
      std::lock_guard lock(channel_mutex_);
      stop_requested_ = false;
    }
    sampler_ = std::thread([this] {
      const auto interval = std::chrono::duration<double>(config_.sampling_interval_s);
      std::unique_lock lock(channel_mutex_);
      while (!cv_.wait_for(lock, interval, [this] { return stop_requested_; })) {
        std::vector<PowerSample> batch;
        lock.unlock();
        source_->poll(clock_->now(), batch);
        lock.lock();
        channel_.insert(channel_.end(), batch.begin(), batch.end());
      }
    });
  }

  void stop_sampler() {
    if (!sampler_.joinable()) return;
    {
      std::lock_guard lock(channel_mutex_);
      stop_requested_ = true;
    }
    cv_.notify_all();
    sampler_.join();
  }

  MeterConfig config_;
  std::unique_ptr<PowerSource> source_;
  std::unique_ptr<Clock> clock_;
  std::string fallback_reason_;

  std::uint64_t next_id_ = 0;
  std::uint64_t active_id_ = 0;
  double t0_ = 0.0;
  std::vector<PowerSample> samples_;

  std::thread sampler_;
  std::mutex channel_mutex_;
  std::condition_variable cv_;
  bool stop_requested_ = false;
  std::vector<PowerSample> channel_;  // single producer: the sampler thread
};

/// Runs `fn` inside a span and returns its report. `fn` receives the meter so
/// it can charge modeled work.
template <typename Fn>
EnergyReport measure(Meter& meter, Fn&& fn) {
  SpanHandle h = meter.start_span();
  try {
    fn(meter);
  } catch (...) {
    meter.stop_span(std::move(h));
    throw;
  }
  return meter.stop_span(std::move(h));
}

}  // namespace ealm::meter

#endif  // EALM_METER_HPP_
