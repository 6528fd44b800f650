#include "fancgan/cli/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <functional>
#include <sstream>

#include "fancgan/archive.hpp"
#include "fancgan/error.hpp"

namespace fancgan::cli {
namespace {

using io::format_double;

template <class T>
struct Field {
  const char* key;
  std::function<void(T&, const std::string&, const std::string&)> set;
  std::function<std::string(const T&)> get;
};

double to_double(const std::string& v, const std::string& name) { return io::parse_double(v, name); }
int to_int(const std::string& v, const std::string& name) {
  const long long x = io::parse_int(v, name);
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("field '" + name + "' is out of range");
  return static_cast<int>(x);
}
std::uint64_t to_u64(const std::string& v, const std::string& name) {
  const long long x = io::parse_int(v, name);
  if (x < 0) throw ConfigError("field '" + name + "' must be >= 0");
  return static_cast<std::uint64_t>(x);
}
bool to_bool(const std::string& v, const std::string& name) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("field '" + name + "': '" + v + "' is not a boolean");
}
std::string bool_str(bool b) { return b ? "true" : "false"; }

std::pair<int, int> to_int_pair(const std::string& v, const std::string& name, char sep) {
  const auto p = v.find(sep);
  if (p == std::string::npos) {
    throw ConfigError("field '" + name + "': expected A" + std::string(1, sep) + "B, got '" + v + "'");
  }
  return {to_int(v.substr(0, p), name), to_int(v.substr(p + 1), name)};
}
std::pair<double, double> to_double_pair(const std::string& v, const std::string& name) {
  const auto p = v.find(':');
  if (p == std::string::npos) throw ConfigError("field '" + name + "': expected MIN:MAX, got '" + v + "'");
  return {to_double(v.substr(0, p), name), to_double(v.substr(p + 1), name)};
}

#define DOUBLE_FIELD(T, KEY, MEMBER) \
  Field<T>{KEY, [](T& c, const std::string& v, const std::string& n) { c.MEMBER = to_double(v, n); }, \
           [](const T& c) { return format_double(c.MEMBER); }}
#define INT_FIELD(T, KEY, MEMBER) \
  Field<T>{KEY, [](T& c, const std::string& v, const std::string& n) { c.MEMBER = to_int(v, n); }, \
           [](const T& c) { return std::to_string(c.MEMBER); }}
#define U64_FIELD(T, KEY, MEMBER) \
  Field<T>{KEY, [](T& c, const std::string& v, const std::string& n) { c.MEMBER = to_u64(v, n); }, \
           [](const T& c) { return std::to_string(c.MEMBER); }}
#define BOOL_FIELD(T, KEY, MEMBER) \
  Field<T>{KEY, [](T& c, const std::string& v, const std::string& n) { c.MEMBER = to_bool(v, n); }, \
           [](const T& c) { return bool_str(c.MEMBER); }}

const std::vector<Field<loss::LossConfig>>& loss_fields() {
  using L = loss::LossConfig;
  static const std::vector<Field<L>> f = {
      DOUBLE_FIELD(L, "alpha_t", alpha_t),
      DOUBLE_FIELD(L, "gamma", gamma),
      DOUBLE_FIELD(L, "tversky_alpha", tversky_alpha),
      DOUBLE_FIELD(L, "tversky_beta", tversky_beta),
      DOUBLE_FIELD(L, "tversky_gamma", tversky_gamma),
      DOUBLE_FIELD(L, "smooth", smooth),
      DOUBLE_FIELD(L, "lambda1", lambda1),
      DOUBLE_FIELD(L, "lambda2", lambda2),
      DOUBLE_FIELD(L, "weight_perceptual", weight_perceptual),
      DOUBLE_FIELD(L, "weight_l1", weight_l1),
      DOUBLE_FIELD(L, "weight_adversarial", weight_adversarial),
      DOUBLE_FIELD(L, "weight_cycle", weight_cycle),
      DOUBLE_FIELD(L, "weight_cycle_perceptual", weight_cycle_perceptual),
  };
  return f;
}

const std::vector<Field<RunConfig>>& data_fields() {
  using R = RunConfig;
  static const std::vector<Field<R>> f = {
      Field<R>{"root", [](R& c, const std::string& v, const std::string&) { c.data_root = v; },
               [](const R& c) { return c.data_root; }},
      Field<R>{"image_size",
               [](R& c, const std::string& v, const std::string& n) {
                 const auto [h, w] = to_int_pair(v, n, 'x');
                 c.model.image_size = {h, w};
               },
               [](const R& c) {
                 return std::to_string(c.model.image_size.height) + "x" + std::to_string(c.model.image_size.width);
               }},
      U64_FIELD(R, "split_seed", split_seed),
      DOUBLE_FIELD(R, "hflip_prob", training.augmentation.horizontal_flip_prob),
      DOUBLE_FIELD(R, "vflip_prob", training.augmentation.vertical_flip_prob),
      BOOL_FIELD(R, "clahe", training.augmentation.clahe_enabled),
      DOUBLE_FIELD(R, "clahe_clip_limit", training.augmentation.clahe_clip_limit),
      Field<R>{"clahe_tiles",
               [](R& c, const std::string& v, const std::string& n) {
                 const auto [r, k] = to_int_pair(v, n, 'x');
                 c.training.augmentation.clahe_tile_grid = {r, k};
               },
               [](const R& c) {
                 const auto& g = c.training.augmentation.clahe_tile_grid;
                 return std::to_string(g.rows) + "x" + std::to_string(g.cols);
               }},
      Field<R>{"crop",
               [](R& c, const std::string& v, const std::string& n) {
                 if (v == "none" || v.empty()) {
                   c.training.augmentation.random_crop_size.reset();
                 } else {
                   c.training.augmentation.random_crop_size = to_int_pair(v, n, 'x');
                 }
               },
               [](const R& c) {
                 const auto& s = c.training.augmentation.random_crop_size;
                 return s ? std::to_string(s->first) + "x" + std::to_string(s->second) : std::string("none");
               }},
  };
  return f;
}

const std::vector<Field<RunConfig>>& model_fields() {
  using R = RunConfig;
  static const std::vector<Field<R>> f = {
      INT_FIELD(R, "generator_depth", model.generator.depth),
      INT_FIELD(R, "generator_width", model.generator.base_width),
      INT_FIELD(R, "latent_dim", model.generator.latent_dim),
      INT_FIELD(R, "style_dim", model.generator.style_dim),
      INT_FIELD(R, "mapping_layers", model.generator.mapping_layers),
      DOUBLE_FIELD(R, "adain_eps", model.generator.adain_eps),
      DOUBLE_FIELD(R, "generator_slope", model.generator.slope),
      INT_FIELD(R, "segmenter_depth", model.segmenter.depth),
      INT_FIELD(R, "segmenter_width", model.segmenter.base_width),
      DOUBLE_FIELD(R, "segmenter_slope", model.segmenter.slope),
      INT_FIELD(R, "disc_width", model.discriminator.base_width),
      INT_FIELD(R, "disc_strided_layers", model.discriminator.strided_layers),
      INT_FIELD(R, "disc_kernel", model.discriminator.kernel),
      INT_FIELD(R, "disc_max_multiplier", model.discriminator.max_width_multiplier),
      DOUBLE_FIELD(R, "disc_slope", model.discriminator.slope),
      DOUBLE_FIELD(R, "disc_norm_eps", model.discriminator.norm_eps),
  };
  return f;
}

const std::vector<Field<RunConfig>>& training_fields() {
  using R = RunConfig;
  static const std::vector<Field<R>> f = {
      INT_FIELD(R, "epochs", training.epochs),
      DOUBLE_FIELD(R, "learning_rate", training.learning_rate),
      INT_FIELD(R, "batch_size", training.batch_size),
      DOUBLE_FIELD(R, "beta1", training.adam.beta1),
      DOUBLE_FIELD(R, "beta2", training.adam.beta2),
      DOUBLE_FIELD(R, "adam_eps", training.adam.eps),
      U64_FIELD(R, "seed", training.seed),
      INT_FIELD(R, "checkpoint_every", training.checkpoint_every),
      Field<R>{"device", [](R& c, const std::string& v, const std::string&) { c.training.device = v; },
               [](const R& c) { return c.training.device; }},
      BOOL_FIELD(R, "augment", training.augment),
  };
  return f;
}

const std::vector<Field<RunConfig>>& eval_fields() {
  using R = RunConfig;
  static const std::vector<Field<R>> f = {
      Field<R>{"extractor", [](R& c, const std::string& v, const std::string&) { c.eval.extractor = v; },
               [](const R& c) { return c.eval.extractor; }},
      U64_FIELD(R, "seed", eval.seed),
      DOUBLE_FIELD(R, "threshold", eval.threshold),
      BOOL_FIELD(R, "identity_baseline", eval.identity_baseline),
      DOUBLE_FIELD(R, "brightness_shift", eval.post.brightness_shift),
      DOUBLE_FIELD(R, "exposure_gain", eval.post.exposure_gain),
      DOUBLE_FIELD(R, "shadow_lift", eval.post.shadow_lift),
      DOUBLE_FIELD(R, "highlight_cut", eval.post.highlight_cut),
  };
  return f;
}

const std::vector<Field<RunConfig>>& synthesis_fields() {
  using R = RunConfig;
  static const std::vector<Field<R>> f = {
      Field<R>{"canvas",
               [](R& c, const std::string& v, const std::string& n) {
                 const auto [h, w] = to_int_pair(v, n, 'x');
                 c.synthesis.canvas = {h, w};
               },
               [](const R& c) {
                 return std::to_string(c.synthesis.canvas.height) + "x" + std::to_string(c.synthesis.canvas.width);
               }},
      Field<R>{"particles",
               [](R& c, const std::string& v, const std::string& n) {
                 c.synthesis.particle_count_range = to_int_pair(v, n, ':');
               },
               [](const R& c) {
                 return std::to_string(c.synthesis.particle_count_range.first) + ":" +
                        std::to_string(c.synthesis.particle_count_range.second);
               }},
      Field<R>{"radius",
               [](R& c, const std::string& v, const std::string& n) { c.synthesis.radius_range = to_double_pair(v, n); },
               [](const R& c) {
                 return format_double(c.synthesis.radius_range.first) + ":" +
                        format_double(c.synthesis.radius_range.second);
               }},
      Field<R>{"ellipticity",
               [](R& c, const std::string& v, const std::string& n) {
                 c.synthesis.ellipticity_range = to_double_pair(v, n);
               },
               [](const R& c) {
                 return format_double(c.synthesis.ellipticity_range.first) + ":" +
                        format_double(c.synthesis.ellipticity_range.second);
               }},
      BOOL_FIELD(R, "overlap", synthesis.overlap_allowed),
      U64_FIELD(R, "seed", synthesis.seed),
      INT_FIELD(R, "max_attempts", synthesis.max_attempts),
  };
  return f;
}

const std::vector<Field<RunConfig>>* section_fields(const std::string& section) {
  if (section == "data") return &data_fields();
  if (section == "model") return &model_fields();
  if (section == "training") return &training_fields();
  if (section == "eval") return &eval_fields();
  if (section == "synthesis") return &synthesis_fields();
  return nullptr;
}

bool is_ablation_section(const std::string& s) { return s.rfind("ablation", 0) == 0; }

template <class T>
void set_field(const std::vector<Field<T>>& fields, T& target, const std::string& section,
               const std::string& key, const std::string& value) {
  for (const auto& f : fields) {
    if (key == f.key) {
      f.set(target, value, section + "." + key);
      return;
    }
  }
  std::string known;
  for (const auto& f : fields) known += std::string(known.empty() ? "" : ", ") + f.key;
  throw ConfigError("unknown key '" + section + "." + key + "' (known: " + known + ")");
}

AblationEntry& ablation_for(RunConfig& c, const std::string& section) {
  if (c.ablations.empty()) c.ablations = default_ablations(c.losses);
  for (auto& a : c.ablations) {
    if (a.key == section) return a;
  }
  c.ablations.push_back({section, section, c.losses});
  return c.ablations.back();
}

}  // namespace

std::vector<AblationEntry> default_ablations(const loss::LossConfig& base) {
  std::vector<AblationEntry> rows;
  loss::LossConfig dice = base;
  dice.tversky_alpha = 0.5;
  dice.tversky_beta = 0.5;
  dice.tversky_gamma = 1.0;
  rows.push_back({"ablation1", "Focal CE + Dice", dice});

  loss::LossConfig focal_tv = base;
  focal_tv.alpha_t = 1.0;
  focal_tv.gamma = 0.0;
  focal_tv.tversky_alpha = 0.3;
  focal_tv.tversky_beta = 0.7;
  focal_tv.tversky_gamma = 0.75;
  rows.push_back({"ablation2", "CE + Focal TV(α=0.3, β=0.7, γ=0.75)", focal_tv});

  loss::LossConfig tv = base;
  tv.tversky_alpha = 0.4;
  tv.tversky_beta = 0.6;
  tv.tversky_gamma = 1.0;
  rows.push_back({"ablation3", "Focal CE + TV(α=0.4, β=0.6)", tv});
  return rows;
}

void RunConfig::validate() const {
  model.validate();
  losses.validate();
  training.validate();
  training.augmentation.validate_for(model.image_size.height, model.image_size.width);
  eval.post.validate();
  if (!(eval.threshold >= 0.0) || !std::isfinite(eval.threshold)) {
    throw ConfigError("eval.threshold must be a finite value >= 0");
  }
  gen::MaskSynthesisSpec spec = synthesis;
  if (spec.canvas.height == 0 && spec.canvas.width == 0) spec.canvas = model.image_size;
  spec.validate();
  for (const auto& a : ablations) {
    try {
      a.losses.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("ablation '" + a.label + "': " + e.what());
    }
  }
}

void apply_setting(RunConfig& c, const std::string& section, const std::string& key, const std::string& value) {
  if (section == "losses") {
    set_field(loss_fields(), c.losses, section, key, value);
    return;
  }
  if (is_ablation_section(section)) {
    AblationEntry& entry = ablation_for(c, section);
    if (key == "label") {
      entry.label = value;
    } else {
      set_field(loss_fields(), entry.losses, section, key, value);
    }
    return;
  }
  const auto* fields = section_fields(section);
  if (!fields) {
    throw ConfigError("unknown config section [" + section +
                      "] (known: data, model, losses, training, eval, synthesis, ablationN)");
  }
  set_field(*fields, c, section, key, value);
}

void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  apply_setting(c, assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1), assignment.substr(eq + 1));
}

RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  RunConfig c;
  boost::property_tree::ptree file_tree;
  if (file) {
    if (!std::filesystem::exists(*file)) throw ConfigError("config file '" + file->string() + "' does not exist");
    try {
      boost::property_tree::read_ini(file->string(), file_tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("cannot parse config: ") + e.what());
    }
    for (const auto& [section, tree] : file_tree) {
      if (tree.empty() && !tree.data().empty()) throw ConfigError("key '" + section + "' appears outside any section");
    }
    // [losses] (file, then overrides) first: ablation rows start from it.
    if (const auto losses = file_tree.get_child_optional("losses")) {
      for (const auto& [key, node] : *losses) apply_setting(c, "losses", key, node.data());
    }
  }
  for (const auto& o : overrides) {
    if (o.rfind("losses.", 0) == 0) apply_override(c, o);
  }
  for (const auto& [section, tree] : file_tree) {
    if (section == "losses") continue;
    for (const auto& [key, node] : tree) apply_setting(c, section, key, node.data());
  }
  for (const auto& o : overrides) {
    if (o.rfind("losses.", 0) != 0) apply_override(c, o);
  }
  if (c.ablations.empty()) c.ablations = default_ablations(c.losses);
  c.validate();
  return c;
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream os;
  auto section = [&](const char* name, const std::vector<Field<RunConfig>>& fields) {
    os << '[' << name << "]\n";
    for (const auto& f : fields) os << f.key << " = " << f.get(c) << '\n';
    os << '\n';
  };
  section("data", data_fields());
  section("model", model_fields());
  os << "[losses]\n";
  for (const auto& f : loss_fields()) os << f.key << " = " << f.get(c.losses) << '\n';
  os << '\n';
  section("training", training_fields());
  section("eval", eval_fields());
  section("synthesis", synthesis_fields());
  for (const auto& a : c.ablations) {
    os << '[' << a.key << "]\nlabel = " << a.label << '\n';
    for (const auto& f : loss_fields()) os << f.key << " = " << f.get(a.losses) << '\n';
    os << '\n';
  }
  return os.str();
}

int parse_synthesis_request(const std::string& text, gen::MaskSynthesisSpec& spec) {
  int count = -1;
  RunConfig scratch;
  scratch.synthesis = spec;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("synthesis item '" + item + "' must look like key=value");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "count") {
      count = to_int(value, "synthesis.count");
    } else {
      set_field(synthesis_fields(), scratch, "synthesis", key, value);
    }
  }
  if (count < 0) throw ConfigError("synthesis request needs count=N with N >= 0");
  spec = scratch.synthesis;
  return count;
}

}  // namespace fancgan::cli
