#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "json.hpp"

#include "potrl/error.hpp"
#include "potrl/harness.hpp"

namespace potrl {
namespace {

using nlohmann::json;

std::string Join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path)
      : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) {
      throw InvalidConfigError((path_.empty() ? "config" : path_) +
                               ": expected an object");
    }
  }

  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& item : object_.items()) {
      if (!seen_.count(item.key())) {
        throw InvalidConfigError(Join(path_, item.key()) + ": unknown key");
      }
    }
  }

  const json* Find(const std::string& key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void Number(const std::string& key, double& out) {
    if (const json* v = Find(key)) {
      if (!v->is_number()) Fail(key, "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) Fail(key, "must be finite");
    }
  }

  template <typename Int>
  void Integer(const std::string& key, Int& out) {
    if (const json* v = Find(key)) {
      if (v->is_number_integer()) {
        if (std::is_unsigned_v<Int> && v->is_number_integer() &&
            !v->is_number_unsigned() && v->get<long long>() < 0) {
          Fail(key, "must be non-negative");
        }
        out = v->get<Int>();
        return;
      }
      if (v->is_number_float()) {
        double d = v->get<double>();
        if (std::floor(d) == d && std::abs(d) < 9e15) {
          if (std::is_unsigned_v<Int> && d < 0) Fail(key, "must be non-negative");
          out = static_cast<Int>(d);
          return;
        }
      }
      Fail(key, "expected an integer");
    }
  }

  void Boolean(const std::string& key, bool& out) {
    if (const json* v = Find(key)) {
      if (!v->is_boolean()) Fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }

  void String(const std::string& key, std::string& out) {
    if (const json* v = Find(key)) {
      if (!v->is_string()) Fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }

  void NumberList(const std::string& key, std::vector<double>& out) {
    if (const json* v = Find(key)) {
      if (!v->is_array()) Fail(key, "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) {
          Fail(key + "[" + std::to_string(i) + "]", "expected a number");
        }
        out.push_back((*v)[i].get<double>());
      }
    }
  }

  ObjectReader Child(const std::string& key, const json& empty) {
    const json* v = Find(key);
    return ObjectReader(v ? *v : empty, Join(path_, key));
  }

  [[noreturn]] void Fail(const std::string& key, const std::string& why) const {
    throw InvalidConfigError(Join(path_, key) + ": " + why);
  }

  const std::string& path() const { return path_; }

 private:
  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

void RequireEqual(ObjectReader& reader, const std::string& key, double fixed) {
  double value = fixed;
  reader.Number(key, value);
  if (value != fixed) {
    std::ostringstream why;
    why << "is fixed at " << fixed << " by the observation layout";
    reader.Fail(key, why.str());
  }
}

std::string CheckpointPolicyName(CheckpointPolicy policy) {
  return policy == CheckpointPolicy::kEveryEpisode ? "every-episode" : "latest";
}

json ToJson(const RunConfig& c) {
  const SimConfig& s = c.episode.sim;
  const CupSpec& cup = c.episode.cup;
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"threads", c.threads},
      {"checkpoints", CheckpointPolicyName(c.checkpoints)},
      {"env",
       {{"kind", ToString(c.env.task)},
        {"weight", c.env.weight},
        {"steps_per_episode", c.episode.steps_per_episode},
        {"episodes", c.episode.episodes},
        {"seed_policy", ToString(c.episode.seed_policy)},
        {"memoize", c.episode.memoize}}},
      {"geometry",
       {{"rings", kRingCount},
        {"ring_resolution", kRingResolution},
        {"base_radius", c.episode.base_radius},
        {"height", c.episode.height},
        {"min_radius_scale", kMinRadiusScale},
        {"max_radius_scale", kMaxRadiusScale}}},
      {"sim",
       {{"dt", s.dt},
        {"gravity", s.gravity},
        {"restitution", s.restitution},
        {"tangential_damping", s.tangential_damping},
        {"resting_contact_speed", s.resting_contact_speed},
        {"interaction_radius", s.interaction_radius},
        {"contact_stiffness", s.contact_stiffness},
        {"contact_damping", s.contact_damping},
        {"particle_count", s.particle_count},
        {"spawn_min_separation", s.spawn_min_separation},
        {"fill_fraction", s.fill_fraction},
        {"pour",
         {{"max_tilt_deg", s.pour.max_tilt_deg},
          {"ramp_seconds", s.pour.ramp_seconds},
          {"settle_seconds", s.pour.settle_seconds},
          {"pivot_height_fraction", s.pour.pivot_height_fraction}}},
        {"shake",
         {{"amplitude_deg", s.shake.amplitude_deg},
          {"duration_seconds", s.shake.duration_seconds},
          {"frequency_hz", s.shake.frequency_hz},
          {"pivot_height_fraction", s.shake.pivot_height_fraction}}}}},
      {"cup",
       {{"center_offset", {cup.center_offset.x, cup.center_offset.y, cup.center_offset.z}},
        {"radius", cup.radius},
        {"height", cup.height}}},
      {"ppo",
       {{"clip_epsilon", c.ppo.clip_epsilon},
        {"gamma", c.ppo.gamma},
        {"gae_lambda", c.ppo.gae_lambda},
        {"update_epochs", c.ppo.update_epochs},
        {"minibatch_size", c.ppo.minibatch_size},
        {"value_coef", c.ppo.value_coef},
        {"entropy_coef", c.ppo.entropy_coef},
        {"rollout_length", c.ppo.rollout_length},
        {"total_steps", c.ppo.total_steps},
        {"normalize_advantages", c.ppo.normalize_advantages}}},
      {"network",
       {{"hidden", c.network.hidden},
        {"activation", "tanh"},
        {"log_std_init", c.network.log_std_init},
        {"log_std_min", c.network.log_std_min},
        {"log_std_max", c.network.log_std_max},
        {"hidden_gain", c.network.hidden_gain},
        {"policy_output_gain", c.network.policy_output_gain},
        {"value_output_gain", c.network.value_output_gain}}},
      {"adam",
       {{"learning_rate", c.adam.learning_rate},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"epsilon", c.adam.epsilon}}},
      {"sweep", {{"weights", c.sweep_weights}}},
  };
}

RunConfig FromJson(const json& doc) {
  const json empty = json::object();
  RunConfig c;
  ObjectReader root(doc, "");
  root.Integer("seed", c.seed);
  std::string out_dir = c.output_dir.string();
  root.String("output_dir", out_dir);
  c.output_dir = out_dir;
  root.Integer("threads", c.threads);
  std::string checkpoints = CheckpointPolicyName(c.checkpoints);
  root.String("checkpoints", checkpoints);
  if (checkpoints == "every-episode") {
    c.checkpoints = CheckpointPolicy::kEveryEpisode;
  } else if (checkpoints == "latest") {
    c.checkpoints = CheckpointPolicy::kLatest;
  } else {
    root.Fail("checkpoints", "expected every-episode or latest");
  }
  {
    ObjectReader env = root.Child("env", empty);
    std::string kind = ToString(c.env.task);
    env.String("kind", kind);
    c.env.task = ParseTaskKind(kind);
    env.Number("weight", c.env.weight);
    env.Integer("steps_per_episode", c.episode.steps_per_episode);
    env.Integer("episodes", c.episode.episodes);
    std::string policy = ToString(c.episode.seed_policy);
    env.String("seed_policy", policy);
    c.episode.seed_policy = ParseSeedPolicy(policy);
    env.Boolean("memoize", c.episode.memoize);
  }
  {
    ObjectReader geo = root.Child("geometry", empty);
    RequireEqual(geo, "rings", static_cast<double>(kRingCount));
    RequireEqual(geo, "ring_resolution", static_cast<double>(kRingResolution));
    RequireEqual(geo, "min_radius_scale", kMinRadiusScale);
    RequireEqual(geo, "max_radius_scale", kMaxRadiusScale);
    geo.Number("base_radius", c.episode.base_radius);
    geo.Number("height", c.episode.height);
  }
  {
    SimConfig& s = c.episode.sim;
    ObjectReader sim = root.Child("sim", empty);
    sim.Number("dt", s.dt);
    sim.Number("gravity", s.gravity);
    sim.Number("restitution", s.restitution);
    sim.Number("tangential_damping", s.tangential_damping);
    sim.Number("resting_contact_speed", s.resting_contact_speed);
    sim.Number("interaction_radius", s.interaction_radius);
    sim.Number("contact_stiffness", s.contact_stiffness);
    sim.Number("contact_damping", s.contact_damping);
    sim.Integer("particle_count", s.particle_count);
    sim.Number("spawn_min_separation", s.spawn_min_separation);
    sim.Number("fill_fraction", s.fill_fraction);
    {
      ObjectReader pour = sim.Child("pour", empty);
      pour.Number("max_tilt_deg", s.pour.max_tilt_deg);
      pour.Number("ramp_seconds", s.pour.ramp_seconds);
      pour.Number("settle_seconds", s.pour.settle_seconds);
      pour.Number("pivot_height_fraction", s.pour.pivot_height_fraction);
    }
    {
      ObjectReader shake = sim.Child("shake", empty);
      shake.Number("amplitude_deg", s.shake.amplitude_deg);
      shake.Number("duration_seconds", s.shake.duration_seconds);
      shake.Number("frequency_hz", s.shake.frequency_hz);
      shake.Number("pivot_height_fraction", s.shake.pivot_height_fraction);
    }
  }
  {
    CupSpec& cup = c.episode.cup;
    ObjectReader reader = root.Child("cup", empty);
    std::vector<double> offset{cup.center_offset.x, cup.center_offset.y,
                               cup.center_offset.z};
    reader.NumberList("center_offset", offset);
    if (offset.size() != 3) reader.Fail("center_offset", "expected three numbers");
    cup.center_offset = {offset[0], offset[1], offset[2]};
    reader.Number("radius", cup.radius);
    reader.Number("height", cup.height);
  }
  {
    ObjectReader ppo = root.Child("ppo", empty);
    ppo.Number("clip_epsilon", c.ppo.clip_epsilon);
    ppo.Number("gamma", c.ppo.gamma);
    ppo.Number("gae_lambda", c.ppo.gae_lambda);
    ppo.Integer("update_epochs", c.ppo.update_epochs);
    ppo.Integer("minibatch_size", c.ppo.minibatch_size);
    ppo.Number("value_coef", c.ppo.value_coef);
    ppo.Number("entropy_coef", c.ppo.entropy_coef);
    ppo.Integer("rollout_length", c.ppo.rollout_length);
    ppo.Integer("total_steps", c.ppo.total_steps);
    ppo.Boolean("normalize_advantages", c.ppo.normalize_advantages);
  }
  {
    ObjectReader net = root.Child("network", empty);
    std::vector<double> hidden(c.network.hidden.begin(), c.network.hidden.end());
    net.NumberList("hidden", hidden);
    c.network.hidden.clear();
    for (double h : hidden) {
      if (std::floor(h) != h) net.Fail("hidden", "layer sizes must be integers");
      c.network.hidden.push_back(static_cast<int>(h));
    }
    std::string activation = "tanh";
    net.String("activation", activation);
    if (activation != "tanh") net.Fail("activation", "only tanh is supported");
    net.Number("log_std_init", c.network.log_std_init);
    net.Number("log_std_min", c.network.log_std_min);
    net.Number("log_std_max", c.network.log_std_max);
    net.Number("hidden_gain", c.network.hidden_gain);
    net.Number("policy_output_gain", c.network.policy_output_gain);
    net.Number("value_output_gain", c.network.value_output_gain);
  }
  {
    ObjectReader adam = root.Child("adam", empty);
    adam.Number("learning_rate", c.adam.learning_rate);
    adam.Number("beta1", c.adam.beta1);
    adam.Number("beta2", c.adam.beta2);
    adam.Number("epsilon", c.adam.epsilon);
  }
  {
    ObjectReader sweep = root.Child("sweep", empty);
    sweep.NumberList("weights", c.sweep_weights);
  }
  return c;
}

PotShape ShapeFromJson(const json& doc) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ParseError("shape file: " + field + ": " + why);
  };
  if (!doc.is_object()) fail("(root)", "expected an object");
  for (const auto& item : doc.items()) {
    const std::string& key = item.key();
    if (key != "base_radius" && key != "height" && key != "radius_scales" &&
        key != "ring_heights") {
      fail(key, "unknown key");
    }
  }
  auto number = [&](const char* key, double fallback) {
    auto it = doc.find(key);
    if (it == doc.end()) return fallback;
    if (!it->is_number()) fail(key, "expected a number");
    return it->get<double>();
  };
  auto ring_array = [&](const char* key) {
    const json& v = doc.at(key);
    if (!v.is_array()) fail(key, "expected an array of " + std::to_string(kRingCount) + " numbers");
    if (v.size() != kRingCount) {
      fail(key, "expected " + std::to_string(kRingCount) + " entries, got " +
                    std::to_string(v.size()));
    }
    RingArray out{};
    for (std::size_t i = 0; i < kRingCount; ++i) {
      if (!v[i].is_number()) {
        fail(std::string(key) + "[" + std::to_string(i) + "]", "expected a number");
      }
      out[i] = v[i].get<double>();
    }
    return out;
  };
  const double base_radius = number("base_radius", kDefaultBaseRadius);
  const double height = number("height", kDefaultHeight);
  if (!doc.contains("radius_scales")) fail("radius_scales", "missing");
  const RingArray scales = ring_array("radius_scales");
  if (doc.contains("ring_heights")) {
    return PotShape(base_radius, height, ring_array("ring_heights"), scales);
  }
  PotShape base(base_radius, height);
  return PotShape(base_radius, height, base.ring_heights(), scales);
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json ParseJson(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

void RunConfig::Validate() const {
  if (env.task == TaskKind::kHybrid && !(env.weight >= 0.0 && env.weight <= 1.0)) {
    throw InvalidConfigError("env.weight: must lie in [0, 1]");
  }
  episode.Validate();
  ppo.Validate();
  network.Validate();
  adam.Validate();
  const long expected =
      static_cast<long>(episode.episodes) * episode.steps_per_episode;
  if (ppo.total_steps != expected) {
    throw InvalidConfigError("ppo.total_steps: must equal env.episodes * env.steps_per_episode (" +
                             std::to_string(expected) + ")");
  }
  if (threads < 1) throw InvalidConfigError("threads: must be at least 1");
  if (output_dir.empty()) throw InvalidConfigError("output_dir: must not be empty");
  for (double w : sweep_weights) {
    if (!(w > 0.0 && w < 1.0)) {
      throw InvalidConfigError("sweep.weights: every weight must lie in (0, 1)");
    }
  }
}

std::string ConfigText(const RunConfig& config) {
  return ToJson(config).dump(2) + "\n";
}

RunConfig ParseConfig(const std::string& text) {
  RunConfig config = FromJson(ParseJson(text, "config"));
  config.Validate();
  return config;
}

RunConfig LoadConfig(const std::filesystem::path& path) {
  return ParseConfig(ReadFile(path));
}

void ApplyOverride(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidConfigError("override '" + assignment + "': expected key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json doc = ToJson(config);
  json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) {
      throw InvalidConfigError(key + ": unknown key");
    }
    node = &(*node)[part];
  }
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  *node = value;
  config = FromJson(doc);
  config.Validate();
}

PotShape ParseShape(const std::string& text) {
  return ShapeFromJson(ParseJson(text, "shape file"));
}

PotShape LoadShape(const std::filesystem::path& path) {
  return ParseShape(ReadFile(path));
}

std::string ShapeText(const PotShape& shape) {
  json doc = {
      {"base_radius", shape.base_radius()},
      {"height", shape.height()},
      {"radius_scales", shape.radius_scales()},
      {"ring_heights", shape.ring_heights()},
  };
  return doc.dump(2) + "\n";
}

}  // namespace potrl
