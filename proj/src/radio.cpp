#include "hv2i/radio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hv2i/errors.hpp"

namespace hv2i::radio {

namespace {

double checked_distance(Position av, const BaseStation& bs) {
  const double r = link_distance(av, bs);
  if (!(r > 0.0)) {
    throw DegenerateGeometry("zero link distance to base station " + std::to_string(bs.id));
  }
  return r;
}

}  // namespace

std::string_view to_string(Tier tier) { return tier == Tier::kRf ? "RF" : "THz"; }

void BaseStation::validate() const {
  if (capacity < 1) throw ConfigError("base station capacity must be >= 1");
  if (!(tx_power > 0) || !(tx_gain > 0) || !(rx_gain > 0)) {
    throw ConfigError("base station powers and gains must be > 0");
  }
  if (!(bandwidth > 0)) throw ConfigError("base station bandwidth must be > 0");
  if (antenna_height < 0) throw ConfigError("antenna height must be >= 0");
  if (tier == Tier::kRf && !(carrier_freq > 0 && carrier_freq < 1e11)) {
    throw ConfigError("RF carrier must lie in the GHz band (< 100 GHz)");
  }
  if (tier == Tier::kThz && !(carrier_freq >= 1e11)) {
    throw ConfigError("THz carrier must be >= 0.1 THz");
  }
}

void RfChannelParams::validate() const {
  if (!(path_loss_exponent >= 2.0)) throw ConfigError("radio.path_loss_exponent must be >= 2");
  if (!(noise_power > 0)) throw ConfigError("radio.rf_noise_power must be > 0");
  if (!(fading_mean > 0)) throw ConfigError("radio.fading_mean must be > 0");
}

void ThzChannelParams::validate() const {
  if (!(absorption_coeff >= 0)) throw ConfigError("radio.absorption_coeff must be >= 0");
  if (!(noise_power > 0)) throw ConfigError("radio.thz_noise_power must be > 0");
  if (!(alignment_prob >= 0 && alignment_prob <= 1)) {
    throw ConfigError("radio.alignment_prob must lie in [0, 1]");
  }
}

double link_distance(Position av, const BaseStation& bs) {
  const double dx = av.x - bs.position.x;
  const double dy = av.y - bs.position.y;
  return std::sqrt(dx * dx + dy * dy + bs.antenna_height * bs.antenna_height);
}

double free_space_factor(double carrier_freq) {
  const double k = kSpeedOfLight / (4.0 * std::numbers::pi * carrier_freq);
  return k * k;
}

double rf_received_power(const BaseStation& bs, Position av, const RfChannelParams& params,
                         double fading) {
  const double r = checked_distance(av, bs);
  return bs.tx_power * bs.tx_gain * bs.rx_gain * free_space_factor(bs.carrier_freq) * fading /
         std::pow(r, params.path_loss_exponent);
}

double thz_received_power(const BaseStation& bs, Position av, const ThzChannelParams& params) {
  const double r = checked_distance(av, bs);
  return bs.tx_gain * bs.rx_gain * free_space_factor(bs.carrier_freq) * bs.tx_power *
         std::exp(-params.absorption_coeff * r) / (r * r);
}

double rf_sinr(const BaseStation& serving, Position av, const RfChannelParams& params,
               double fading_sample, std::span<const RfInterferer> interferers) {
  if (serving.tier != Tier::kRf) throw ContractViolation("rf_sinr: serving station is not RF");
  double interference = 0.0;
  for (const auto& i : interferers) {
    if (i.station.tier != Tier::kRf) throw ContractViolation("rf_sinr: non-RF interferer");
    interference += rf_received_power(i.station, av, params, i.fading);
  }
  return rf_received_power(serving, av, params, fading_sample) / (params.noise_power + interference);
}

double thz_sinr(const BaseStation& serving, Position av, const ThzChannelParams& params,
                std::span<const ThzInterferer> interferers) {
  if (serving.tier != Tier::kThz) throw ContractViolation("thz_sinr: serving station is not THz");
  double interference = 0.0;
  for (const auto& i : interferers) {
    if (i.station.tier != Tier::kThz) throw ContractViolation("thz_sinr: non-THz interferer");
    if (i.aligned) interference += thz_received_power(i.station, av, params);
  }
  return thz_received_power(serving, av, params) / (params.noise_power + interference);
}

double shannon_rate(double bandwidth, double sinr) {
  if (!(sinr >= 0.0)) throw ContractViolation("shannon_rate: negative SINR");
  return bandwidth * std::log1p(sinr) / std::numbers::ln2;
}

double weighted_rate(double rate, int capacity, int load, double ho_penalty) {
  if (capacity < 1) throw ContractViolation("weighted_rate: capacity must be >= 1");
  if (load < 0) throw ContractViolation("weighted_rate: negative load");
  if (!(ho_penalty >= 0.0 && ho_penalty <= 1.0)) {
    throw ContractViolation("weighted_rate: penalty outside [0, 1]");
  }
  const int sharing = std::min(capacity, std::max(load, 1));
  return rate / static_cast<double>(sharing) * (1.0 - ho_penalty);
}

double to_db(double linear) { return 10.0 * std::log10(linear); }
double from_db(double db) { return std::pow(10.0, db / 10.0); }

SinrTable sample_sinr_table(std::span<const Position> avs, std::span<const BaseStation> stations,
                            const RadioConfig& cfg, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < stations.size(); ++i) {
    if (stations[i].id != static_cast<int>(i)) {
      throw ContractViolation("sample_sinr_table: station ids must equal their index");
    }
  }
  std::exponential_distribution<double> fading_dist(1.0 / cfg.rf.fading_mean);
  std::bernoulli_distribution aligned_dist(cfg.thz.alignment_prob);

  SinrTable table;
  table.sinr.resize(avs.size());
  std::vector<double> fading(stations.size());
  std::vector<bool> aligned(stations.size());
  std::vector<RfInterferer> rf_interferers;
  std::vector<ThzInterferer> thz_interferers;

  for (std::size_t a = 0; a < avs.size(); ++a) {
    // Draw order is fixed (station by station) for reproducibility.
    for (std::size_t s = 0; s < stations.size(); ++s) {
      if (stations[s].tier == Tier::kRf) {
        fading[s] = fading_dist(rng);
      } else {
        aligned[s] = aligned_dist(rng);
      }
    }
    auto& row = table.sinr[a];
    row.resize(stations.size());
    for (std::size_t s = 0; s < stations.size(); ++s) {
      const BaseStation& serving = stations[s];
      rf_interferers.clear();
      thz_interferers.clear();
      for (std::size_t o = 0; o < stations.size(); ++o) {
        if (o == s || stations[o].tier != serving.tier) continue;
        const double dx = avs[a].x - stations[o].position.x;
        const double dy = avs[a].y - stations[o].position.y;
        if (std::hypot(dx, dy) > cfg.interference_radius) continue;
        if (serving.tier == Tier::kRf) {
          rf_interferers.push_back({stations[o], fading[o]});
        } else {
          thz_interferers.push_back({stations[o], aligned[o]});
        }
      }
      row[s] = serving.tier == Tier::kRf
                   ? rf_sinr(serving, avs[a], cfg.rf, fading[s], rf_interferers)
                   : thz_sinr(serving, avs[a], cfg.thz, thz_interferers);
    }
  }
  return table;
}

}  // namespace hv2i::radio
