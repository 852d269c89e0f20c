#pragma once

#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace hv2i::radio {

inline constexpr double kSpeedOfLight = 299'792'458.0;

enum class Tier { kRf, kThz };

std::string_view to_string(Tier tier);

struct Position {
  double x = 0.0;
  double y = 0.0;
};

struct BaseStation {
  int id = 0;
  Tier tier = Tier::kRf;
  Position position;
  double antenna_height = 10.0;
  int capacity = 1;
  double tx_power = 1.0;  // W
  double tx_gain = 1.0;   // linear
  double rx_gain = 1.0;   // linear
  double carrier_freq = 3.5e9;
  double bandwidth = 20e6;

  void validate() const;
};

struct RfChannelParams {
  double path_loss_exponent = 3.0;
  double noise_power = 1e-13;  // W
  double fading_mean = 1.0;

  void validate() const;
};

struct ThzChannelParams {
  double absorption_coeff = 0.05;  // 1/m
  double noise_power = 4e-12;      // W
  double alignment_prob = 0.1;

  void validate() const;
};

struct RfInterferer {
  BaseStation station;
  double fading = 1.0;
};

struct ThzInterferer {
  BaseStation station;
  bool aligned = false;
};

// sqrt(d^2 + h^2) with d the ground distance and h the antenna height.
double link_distance(Position av, const BaseStation& bs);

// Free-space constant (c / (4 pi f))^2.
double free_space_factor(double carrier_freq);

// P * Gt * Gr * (c/4 pi f)^2 * H / r^alpha
double rf_received_power(const BaseStation& bs, Position av, const RfChannelParams& params,
                         double fading);

// Gt * Gr * (c/4 pi f)^2 * P * exp(-Ka r) / r^2
double thz_received_power(const BaseStation& bs, Position av, const ThzChannelParams& params);

double rf_sinr(const BaseStation& serving, Position av, const RfChannelParams& params,
               double fading_sample, std::span<const RfInterferer> interferers);

// Only interferers flagged as aligned contribute.
double thz_sinr(const BaseStation& serving, Position av, const ThzChannelParams& params,
                std::span<const ThzInterferer> interferers);

double shannon_rate(double bandwidth, double sinr);

// rate / min(Q, max(n, 1)) * (1 - mu)
double weighted_rate(double rate, int capacity, int load, double ho_penalty);

double to_db(double linear);
double from_db(double db);

struct RadioConfig {
  RfChannelParams rf;
  ThzChannelParams thz;
  double interference_radius = 1000.0;  // m, same-tier interferers beyond this are ignored
};

// One step's channel realisation: sinr[av][station index] with fading drawn
// i.i.d. exponential per (av, station) and alignment Bernoulli(q) per
// (av, station). Station ids must equal their index in `stations`.
struct SinrTable {
  std::vector<std::vector<double>> sinr;
};

SinrTable sample_sinr_table(std::span<const Position> avs, std::span<const BaseStation> stations,
                            const RadioConfig& cfg, std::mt19937_64& rng);

}  // namespace hv2i::radio
