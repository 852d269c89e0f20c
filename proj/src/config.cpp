#include "hv2i/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <variant>

#include <toml.hpp>

#include "hv2i/errors.hpp"
#include "hv2i/hash.hpp"

namespace hv2i {

namespace {

struct EnumField {
  std::function<std::string()> get;
  std::function<bool(const std::string&)> set;  // false on unknown value
  std::string allowed;
};

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields are bound as uint64_t");
using FieldRef = std::variant<double*, int*, bool*, std::string*, std::uint64_t*, std::vector<int>*, EnumField>;

struct Binding {
  std::string section;
  std::string key;
  FieldRef ref;
};

template <typename E, std::size_t N>
EnumField enum_field(E* target, const std::array<std::pair<E, const char*>, N>& names) {
  std::string allowed;
  for (const auto& [value, name] : names) allowed += (allowed.empty() ? "" : "|") + std::string(name);
  return EnumField{
      [target, names] {
        for (const auto& [value, name] : names) {
          if (value == *target) return std::string(name);
        }
        return std::string();
      },
      [target, names](const std::string& s) {
        for (const auto& [value, name] : names) {
          if (s == name) {
            *target = value;
            return true;
          }
        }
        return false;
      },
      allowed};
}

const std::array<std::pair<AdPolicyKind, const char*>, 4> kAdPolicyNames{{
    {AdPolicyKind::kLlm, "llm"},
    {AdPolicyKind::kDdqn, "ddqn"},
    {AdPolicyKind::kRandom, "random"},
    {AdPolicyKind::kScripted, "scripted"},
}};

const std::array<std::pair<V2IPolicyKind, const char*>, 5> kV2IPolicyNames{{
    {V2IPolicyKind::kDdqn, "ddqn"},
    {V2IPolicyKind::kRandom, "random"},
    {V2IPolicyKind::kFixedA1, "fixed_a1"},
    {V2IPolicyKind::kFixedA2, "fixed_a2"},
    {V2IPolicyKind::kFixedA3, "fixed_a3"},
}};

std::vector<Binding> bindings(RunConfig& c) {
  auto& h = c.highway;
  auto& r = c.radio;
  auto& v = c.v2i;
  auto& d = c.ddqn;
  auto& l = c.llm;
  auto& k = c.campaign;
  return {
      {"highway", "length", &h.road.length},
      {"highway", "n_lanes", &h.road.n_lanes},
      {"highway", "lane_width", &h.road.lane_width},
      {"highway", "v_min", &h.road.v_min},
      {"highway", "v_max", &h.road.v_max},
      {"highway", "dt", &h.road.dt},
      {"highway", "accel_delta", &h.road.accel_delta},
      {"highway", "lane_change_duration", &h.road.lane_change_duration},
      {"highway", "vehicle_length", &h.road.vehicle_length},
      {"highway", "vehicle_width", &h.road.vehicle_width},
      {"highway", "max_steps", &h.road.max_steps},
      {"highway", "n_observed", &h.n_observed},
      {"highway", "c1", &h.weights.c1},
      {"highway", "c2", &h.weights.c2},
      {"highway", "c3", &h.weights.c3},
      {"highway", "c4", &h.weights.c4},
      {"highway", "right_lane_term",
       enum_field(&h.weights.right_lane,
                  std::array<std::pair<highway::RightLaneTerm, const char*>, 2>{
                      {{highway::RightLaneTerm::kLinear, "linear"}, {highway::RightLaneTerm::kStep, "step"}}})},

      {"radio", "rf_frequency", &r.rf_frequency},
      {"radio", "thz_frequency", &r.thz_frequency},
      {"radio", "path_loss_exponent", &r.channel.rf.path_loss_exponent},
      {"radio", "rf_noise_power", &r.channel.rf.noise_power},
      {"radio", "fading_mean", &r.channel.rf.fading_mean},
      {"radio", "absorption_coeff", &r.channel.thz.absorption_coeff},
      {"radio", "thz_noise_power", &r.channel.thz.noise_power},
      {"radio", "alignment_prob", &r.channel.thz.alignment_prob},
      {"radio", "interference_radius", &r.channel.interference_radius},
      {"radio", "rf_tx_power", &r.rf_tx_power},
      {"radio", "thz_tx_power", &r.thz_tx_power},
      {"radio", "rf_tx_gain", &r.rf_tx_gain},
      {"radio", "rf_rx_gain", &r.rf_rx_gain},
      {"radio", "thz_tx_gain", &r.thz_tx_gain},
      {"radio", "thz_rx_gain", &r.thz_rx_gain},
      {"radio", "rf_bandwidth", &r.rf_bandwidth},
      {"radio", "thz_bandwidth", &r.thz_bandwidth},
      {"radio", "rf_capacity", &r.rf_capacity},
      {"radio", "thz_capacity", &r.thz_capacity},
      {"radio", "antenna_height", &r.antenna_height},

      {"v2i", "gamma_th", &v.gamma_th},
      {"v2i", "mu_rf", &v.penalty.rf},
      {"v2i", "mu_thz", &v.penalty.thz},
      {"v2i", "ho_window", &v.ho_window},
      {"v2i", "rate_unit", &v.rate_unit},
      {"v2i", "background_action",
       enum_field(&v.background_action, std::array<std::pair<v2i::V2IAction, const char*>, 3>{
                                            {{v2i::V2IAction::kMaxWeightedRate, "A1"},
                                             {v2i::V2IAction::kCapacityAware, "A2"},
                                             {v2i::V2IAction::kMaxRate, "A3"}}})},

      {"ddqn", "hidden", &d.agent.hidden},
      {"ddqn", "activation",
       enum_field(&d.agent.activation, std::array<std::pair<ddqn::Activation, const char*>, 3>{
                                           {{ddqn::Activation::kRelu, "relu"},
                                            {ddqn::Activation::kLeakyRelu, "leaky_relu"},
                                            {ddqn::Activation::kTanh, "tanh"}}})},
      {"ddqn", "gamma", &d.agent.gamma},
      {"ddqn", "lr", &d.agent.sgd.learning_rate},
      {"ddqn", "momentum", &d.agent.sgd.momentum},
      {"ddqn", "grad_clip", &d.agent.sgd.clip_norm},
      {"ddqn", "batch_size", &d.agent.batch_size},
      {"ddqn", "buffer_capacity", &d.agent.buffer_capacity},
      {"ddqn", "target_sync",
       enum_field(&d.agent.sync_mode, std::array<std::pair<ddqn::SyncMode, const char*>, 2>{
                                          {{ddqn::SyncMode::kHard, "hard"}, {ddqn::SyncMode::kSoft, "soft"}}})},
      {"ddqn", "target_sync_every", &d.agent.sync_every},
      {"ddqn", "tau", &d.agent.tau},
      {"ddqn", "learning_starts", &d.agent.learning_starts},
      {"ddqn", "train_every", &d.agent.train_every},
      {"ddqn", "eps_start", &d.eps_start},
      {"ddqn", "eps_end", &d.eps_end},
      {"ddqn", "eps_decay_fraction", &d.eps_decay_fraction},

      {"llm", "backend",
       enum_field(&l.backend.kind, std::array<std::pair<llm::BackendKind, const char*>, 2>{
                                       {{llm::BackendKind::kHttpChat, "http"},
                                        {llm::BackendKind::kScripted, "scripted"}}})},
      {"llm", "script", &l.backend.script},
      {"llm", "endpoint", &l.backend.endpoint},
      {"llm", "model", &l.backend.model},
      {"llm", "temperature", &l.backend.temperature},
      {"llm", "timeout_s", &l.backend.timeout_s},
      {"llm", "max_retries", &l.backend.max_retries},
      {"llm", "retry_backoff_s", &l.backend.retry_backoff_s},
      {"llm", "max_tokens", &l.backend.max_tokens},
      {"llm", "api_key_env", &l.backend.api_key_env},
      {"llm", "system_prompt", &l.backend.system_prompt},
      {"llm", "top_k", &l.top_k},
      {"llm", "pool_capacity", &l.pool_capacity},
      {"llm", "char_budget", &l.char_budget},
      {"llm", "prompt_template", &l.prompt_template},

      {"campaign", "n_episodes", &k.n_episodes},
      {"campaign", "ad_policy", enum_field(&k.ad_policy, kAdPolicyNames)},
      {"campaign", "v2i_policy", enum_field(&k.v2i_policy, kV2IPolicyNames)},
      {"campaign", "scripted_action", &k.scripted_action},
      {"campaign", "env_seed", &k.env_seed},
      {"campaign", "learner_seed", &k.learner_seed},
      {"campaign", "backend_seed", &k.backend_seed},
      {"campaign", "n_avs", &k.n_avs},
      {"campaign", "n_rbs", &k.n_rbs},
      {"campaign", "n_tbs", &k.n_tbs},
      {"campaign", "desired_velocity", &k.desired_velocity},
      {"campaign", "roadside_margin", &k.roadside_margin},
      {"campaign", "convergence_window", &k.convergence_window},
      {"campaign", "convergence_threshold", &k.convergence_threshold},
      {"campaign", "summary_window", &k.summary_window},
      {"campaign", "stop_on_convergence", &k.stop_on_convergence},
      {"campaign", "write_traces", &k.write_traces},
  };
}

[[noreturn]] void fail(std::string_view source, const std::string& where, const std::string& what) {
  throw ConfigError(std::string(source) + ": " + where + ": " + what);
}

std::int64_t read_integer(const toml::node& node, std::string_view source, const std::string& where) {
  if (auto v = node.value_exact<std::int64_t>()) return *v;
  fail(source, where, "expected an integer");
}

void assign(const toml::node& node, FieldRef& ref, std::string_view source, const std::string& where) {
  std::visit(
      [&](auto&& target) {
        using T = std::decay_t<decltype(target)>;
        if constexpr (std::is_same_v<T, double*>) {
          if (auto f = node.value_exact<double>()) {
            *target = *f;
          } else if (auto i = node.value_exact<std::int64_t>()) {
            *target = static_cast<double>(*i);
          } else {
            fail(source, where, "expected a number");
          }
        } else if constexpr (std::is_same_v<T, int*>) {
          const auto i = read_integer(node, source, where);
          if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
            fail(source, where, "integer out of range");
          }
          *target = static_cast<int>(i);
        } else if constexpr (std::is_same_v<T, std::uint64_t*>) {
          const auto i = read_integer(node, source, where);
          if (i < 0) fail(source, where, "expected a non-negative integer");
          *target = static_cast<std::remove_pointer_t<T>>(i);
        } else if constexpr (std::is_same_v<T, bool*>) {
          if (auto b = node.value_exact<bool>()) {
            *target = *b;
          } else {
            fail(source, where, "expected true or false");
          }
        } else if constexpr (std::is_same_v<T, std::string*>) {
          if (auto s = node.value_exact<std::string>()) {
            *target = *s;
          } else {
            fail(source, where, "expected a string");
          }
        } else if constexpr (std::is_same_v<T, std::vector<int>*>) {
          const auto* arr = node.as_array();
          if (arr == nullptr) fail(source, where, "expected an array of integers");
          std::vector<int> values;
          for (const auto& el : *arr) values.push_back(static_cast<int>(read_integer(el, source, where)));
          *target = std::move(values);
        } else if constexpr (std::is_same_v<T, EnumField>) {
          auto s = node.value_exact<std::string>();
          if (!s || !target.set(*s)) fail(source, where, "expected one of " + target.allowed);
        }
      },
      ref);
}

void emit(toml::table& section, const Binding& b) {
  std::visit(
      [&](auto&& target) {
        using T = std::decay_t<decltype(target)>;
        if constexpr (std::is_same_v<T, EnumField>) {
          section.insert_or_assign(b.key, target.get());
        } else if constexpr (std::is_same_v<T, std::vector<int>*>) {
          toml::array arr;
          for (int x : *target) arr.push_back(static_cast<std::int64_t>(x));
          section.insert_or_assign(b.key, std::move(arr));
        } else if constexpr (std::is_same_v<T, std::uint64_t*> ||
                             std::is_same_v<T, int*>) {
          section.insert_or_assign(b.key, static_cast<std::int64_t>(*target));
        } else {
          section.insert_or_assign(b.key, *target);
        }
      },
      b.ref);
}

}  // namespace

std::string_view to_string(AdPolicyKind kind) {
  for (const auto& [k, name] : kAdPolicyNames) {
    if (k == kind) return name;
  }
  return "?";
}

std::string_view to_string(V2IPolicyKind kind) {
  for (const auto& [k, name] : kV2IPolicyNames) {
    if (k == kind) return name;
  }
  return "?";
}

void RunConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  }
  highway.road.validate();
  highway.weights.validate();
  if (highway.n_observed < 0) throw ConfigError("highway.n_observed must be >= 0");

  radio.channel.rf.validate();
  radio.channel.thz.validate();
  if (!(radio.channel.interference_radius >= 0)) throw ConfigError("radio.interference_radius must be >= 0");
  radio::BaseStation rf{0, radio::Tier::kRf, {}, radio.antenna_height, radio.rf_capacity, radio.rf_tx_power,
                        radio.rf_tx_gain, radio.rf_rx_gain, radio.rf_frequency, radio.rf_bandwidth};
  radio::BaseStation thz{0, radio::Tier::kThz, {}, radio.antenna_height, radio.thz_capacity, radio.thz_tx_power,
                         radio.thz_tx_gain, radio.thz_rx_gain, radio.thz_frequency, radio.thz_bandwidth};
  rf.validate();
  thz.validate();

  if (!(v2i.gamma_th > 0)) throw ConfigError("v2i.gamma_th must be > 0");
  for (double mu : {v2i.penalty.rf, v2i.penalty.thz}) {
    if (!(mu >= 0 && mu <= 1)) throw ConfigError("v2i handover penalties must lie in [0, 1]");
  }
  if (v2i.ho_window < 1) throw ConfigError("v2i.ho_window must be >= 1");
  if (!(v2i.rate_unit > 0)) throw ConfigError("v2i.rate_unit must be > 0");

  ddqn.agent.validate();
  if (!(ddqn.eps_start >= 0 && ddqn.eps_start <= 1 && ddqn.eps_end >= 0 && ddqn.eps_end <= ddqn.eps_start)) {
    throw ConfigError("ddqn epsilon schedule must satisfy 0 <= eps_end <= eps_start <= 1");
  }
  if (!(ddqn.eps_decay_fraction > 0 && ddqn.eps_decay_fraction <= 1)) {
    throw ConfigError("ddqn.eps_decay_fraction must lie in (0, 1]");
  }

  llm.backend.validate();
  if (llm.pool_capacity < 1) throw ConfigError("llm.pool_capacity must be >= 1");
  if (llm.char_budget < 1) throw ConfigError("llm.char_budget must be >= 1");

  const auto& k = campaign;
  if (k.n_episodes < 1) throw ConfigError("campaign.n_episodes must be >= 1");
  if (k.n_avs < 1) throw ConfigError("campaign.n_avs must be >= 1");
  if (k.n_rbs < 0 || k.n_tbs < 0) throw ConfigError("campaign station counts must be >= 0");
  if (!(k.desired_velocity >= highway.road.v_min && k.desired_velocity <= highway.road.v_max)) {
    throw ConfigError("campaign.desired_velocity must lie in [v_min, v_max]");
  }
  if (!(k.roadside_margin >= 0)) throw ConfigError("campaign.roadside_margin must be >= 0");
  if (k.convergence_window < 1) throw ConfigError("campaign.convergence_window must be >= 1");
  if (!(k.convergence_threshold > 0)) throw ConfigError("campaign.convergence_threshold must be > 0");
  if (k.summary_window < 1) throw ConfigError("campaign.summary_window must be >= 1");
  if (!highway::ad_action_from_string(k.scripted_action)) {
    throw ConfigError("campaign.scripted_action must be an AD action name");
  }
}

void RunConfig::set_seed(std::uint64_t seed) {
  campaign.env_seed = seed;
  campaign.learner_seed = seed;
  campaign.backend_seed = seed;
}

RunConfig parse_config(std::string_view toml_text, std::string_view source_name) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e;
    throw ConfigError(msg.str());
  }

  RunConfig cfg;
  auto table = bindings(cfg);
  std::map<std::string, std::map<std::string, FieldRef*>> index;
  for (auto& b : table) index[b.section][b.key] = &b.ref;

  for (auto&& [section_key, section_node] : root) {
    const std::string section(section_key.str());
    if (section == "schema_version") {
      cfg.schema_version = static_cast<int>(read_integer(section_node, source_name, section));
      continue;
    }
    auto s = index.find(section);
    if (s == index.end()) fail(source_name, section, "unknown section");
    const auto* tbl = section_node.as_table();
    if (tbl == nullptr) fail(source_name, section, "expected a [section] table");
    for (auto&& [key, node] : *tbl) {
      const std::string name(key.str());
      auto f = s->second.find(name);
      if (f == s->second.end()) fail(source_name, section + "." + name, "unknown key");
      assign(node, *f->second, source_name, section + "." + name);
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig cfg = parse_config(text.str(), path.string());
  // Relative template paths are taken from the config file's directory.
  auto& tmpl = cfg.llm.prompt_template;
  if (!tmpl.empty() && std::filesystem::path(tmpl).is_relative()) {
    tmpl = (path.parent_path() / tmpl).lexically_normal().string();
  }
  return cfg;
}

llm::PromptTemplate load_prompt_template(const std::filesystem::path& path) {
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e;
    throw ConfigError(msg.str());
  }
  llm::PromptTemplate t;
  const std::pair<const char*, std::string*> fields[] = {
      {"task", &t.task}, {"good_intro", &t.good_intro}, {"bad_intro", &t.bad_intro},
      {"state_intro", &t.state_intro}, {"decision", &t.decision}};
  for (auto&& [key, node] : root) {
    const auto it = std::find_if(std::begin(fields), std::end(fields),
                                 [&](const auto& f) { return key.str() == f.first; });
    if (it == std::end(fields)) fail(path.string(), std::string(key.str()), "unknown key");
  }
  for (const auto& [key, target] : fields) {
    auto value = root[key].value<std::string>();
    if (!value) fail(path.string(), key, "missing string");
    *target = *value;
  }
  t.validate();
  return t;
}

std::string serialize_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  toml::table root;
  root.insert_or_assign("schema_version", static_cast<std::int64_t>(copy.schema_version));
  for (const auto& b : bindings(copy)) {
    if (!root.contains(b.section)) root.insert_or_assign(b.section, toml::table{});
    emit(*root[b.section].as_table(), b);
  }
  std::ostringstream out;
  out << root << "\n";
  return out.str();
}

std::string config_hash(const RunConfig& cfg) {
  std::string text = serialize_config(cfg);
  // A custom template changes the prompts, so its bytes are part of the identity.
  if (!cfg.llm.prompt_template.empty()) {
    std::ifstream in(cfg.llm.prompt_template, std::ios::binary);
    if (!in) throw ConfigError("cannot open prompt template: " + cfg.llm.prompt_template);
    std::ostringstream body;
    body << in.rdbuf();
    text += "\n# prompt_template\n" + body.str();
  }
  return sha256_hex(text);
}

}  // namespace hv2i
