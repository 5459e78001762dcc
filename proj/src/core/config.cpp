/*
 *  Copyright 2026 The VSMO Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#include "core/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "core/io.hpp"

namespace vsmo {

namespace pt = boost::property_tree;

ObserverVariant parse_variant(const std::string& name) {
  std::vector<std::string> parts;
  boost::split(parts, name, boost::is_any_of("-"));
  ObserverVariant v;
  v.name = name;
  require(!parts.empty() && (parts[0] == "pw" || parts[0] == "npw"), ErrorCode::invalid_parameter,
          "observer variant must start with pw or npw: " + name);
  v.prewhitening = parts[0] == "pw";
  std::size_t i = 1;
  if (i < parts.size() && parts[i] == "thr") {
    v.thresholds = ThresholdStrategy::trained;
    ++i;
  }
  if (i < parts.size() && parts[i] == "shared") {
    v.stage_specific = false;
    ++i;
  }
  require(i == parts.size(), ErrorCode::invalid_parameter, "unknown observer variant: " + name);
  return v;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  const std::string t = boost::trim_copy(text);
  if (t.empty()) return out;
  try {
    if (t.find(':') != std::string::npos) {
      std::vector<std::string> p;
      boost::split(p, t, boost::is_any_of(":"));
      require(p.size() == 3, ErrorCode::parse, "range must be start:stop:step: " + text);
      const double a = std::stod(p[0]), b = std::stod(p[1]), step = std::stod(p[2]);
      require(step > 0 && b >= a, ErrorCode::parse, "range needs start <= stop and a positive step: " + text);
      const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
      for (long i = 0; i <= n; ++i) {
        // Rounded to 12 significant digits so 0.2 + 0.2k prints cleanly.
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.12g", a + static_cast<double>(i) * step);
        out.push_back(std::stod(buf));
      }
      return out;
    }
    std::vector<std::string> p;
    boost::split(p, t, boost::is_any_of(","));
    for (auto& s : p) out.push_back(std::stod(boost::trim_copy(s)));
  } catch (const std::logic_error&) {
    fail(ErrorCode::parse, "not a number list: " + text);
  }
  return out;
}

namespace {

std::vector<std::string> parse_word_list(const std::string& text) {
  std::vector<std::string> p, out;
  boost::split(p, text, boost::is_any_of(","));
  for (auto& s : p) {
    boost::trim(s);
    if (!s.empty()) out.push_back(s);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) out += fmt(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

ConfigSection::ConfigSection(std::string name, std::map<std::string, std::string> values)
    : name_(std::move(name)), values_(std::move(values)) {}

std::string ConfigSection::where(const std::string& key) const { return "[" + name_ + "] " + key; }

const std::string* ConfigSection::take(const std::string& key) {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void ConfigSection::read(const std::string& key, bool& out) {
  if (const auto* v = take(key)) {
    require(*v == "true" || *v == "false", ErrorCode::parse, where(key) + " must be true or false");
    out = *v == "true";
  }
}

void ConfigSection::read(const std::string& key, int& out) {
  if (const auto* v = take(key)) {
    std::size_t n = 0;
    try {
      out = std::stoi(*v, &n);
    } catch (const std::logic_error&) {
      n = 0;
    }
    require(n == v->size() && n > 0, ErrorCode::parse, where(key) + " is not an integer: " + *v);
  }
}

void ConfigSection::read(const std::string& key, std::uint64_t& out) {
  if (const auto* v = take(key)) {
    std::size_t n = 0;
    try {
      out = std::stoull(*v, &n);
    } catch (const std::logic_error&) {
      n = 0;
    }
    require(n == v->size() && n > 0 && (*v)[0] != '-', ErrorCode::parse, where(key) + " is not an unsigned integer: " + *v);
  }
}

void ConfigSection::read(const std::string& key, double& out) {
  if (const auto* v = take(key)) {
    std::size_t n = 0;
    try {
      out = std::stod(*v, &n);
    } catch (const std::logic_error&) {
      n = 0;
    }
    require(n == v->size() && n > 0, ErrorCode::parse, where(key) + " is not a number: " + *v);
  }
}

void ConfigSection::read(const std::string& key, std::string& out) {
  if (const auto* v = take(key)) out = *v;
}

void ConfigSection::read(const std::string& key, std::vector<double>& out) {
  if (const auto* v = take(key)) out = parse_real_list(*v);
}

void ConfigSection::read(const std::string& key, std::vector<int>& out) {
  if (const auto* v = take(key)) {
    out.clear();
    for (double d : parse_real_list(*v)) {
      require(d == std::floor(d), ErrorCode::parse, where(key) + " must hold integers");
      out.push_back(static_cast<int>(d));
    }
  }
}

void ConfigSection::read(const std::string& key, std::vector<std::string>& out) {
  if (const auto* v = take(key)) out = parse_word_list(*v);
}

void ConfigSection::finish() const {
  for (const auto& [k, v] : values_) require(used_.count(k) > 0, ErrorCode::parse, "unknown key " + where(k));
}

std::map<std::string, ConfigSection> parse_config_sections(const std::string& text, const std::set<std::string>& known) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::parse, std::string("config: ") + e.what());
  }
  std::map<std::string, ConfigSection> out;
  for (const auto& [name, child] : tree) {
    require(!child.empty() || child.data().empty(), ErrorCode::parse, "config keys must live in a section: " + name);
    require(known.count(name) > 0, ErrorCode::parse, "unknown config section [" + name + "]");
    std::map<std::string, std::string> values;
    for (const auto& [key, leaf] : child) {
      std::string v = boost::trim_copy(leaf.data());
      if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
      values[key] = v;
    }
    out.emplace(name, ConfigSection(name, std::move(values)));
  }
  for (const auto& name : known)
    if (!out.count(name)) out.emplace(name, ConfigSection(name, {}));
  return out;
}

ExperimentConfig::ExperimentConfig() {
  using std::numbers::pi;
  bank_thetas = {0.0, pi / 4, pi / 2, 3 * pi / 4};
  bank_phis = {0.0, pi / 2};
  for (const char* v : {"pw", "pw-thr", "npw", "npw-thr"}) variants.push_back(parse_variant(v));
  diameters = parse_real_list("0.2:3.6:0.2");
  correlation_rhos = parse_real_list("0:0.95:0.05");
}

void ExperimentConfig::validate() const {
  phantom.validate();
  pinhole.validate();
  require(threads >= 1, ErrorCode::invalid_parameter, "threads must be at least 1");
  require(!diameters.empty(), ErrorCode::invalid_parameter, "the diameter list must not be empty");
  for (double d : diameters) require(d > 0, ErrorCode::invalid_parameter, "diameters must be positive");
  require(!variants.empty(), ErrorCode::invalid_parameter, "at least one observer variant is needed");
  const auto b = bank();
  require(refined_bank_size >= 1 && refined_bank_size <= static_cast<int>(b.size()), ErrorCode::invalid_parameter,
          "refined bank size must be in [1, bank size]");
  require(refined_bank_size <= 32, ErrorCode::invalid_parameter, "refined bank size must be at most 32");
  require(features_per_stage >= 1 && features_per_stage <= refined_bank_size && features_per_stage <= 16,
          ErrorCode::invalid_parameter, "features per stage must be in [1, refined bank size]");
  require(max_candidates >= 1 && min_separation >= 1.0 && localization_radius >= 0,
          ErrorCode::invalid_parameter, "invalid candidate or localization settings");
  require(design_pairs > 0 && train_pairs > 0 && test_pairs > 0 && trials > 0, ErrorCode::invalid_parameter,
          "sweep sizes must be positive");
  require(study_diameter > 0 && study_trials > 0 && study_test_pairs > 0 && study_design_pairs > 0 && !study_sizes.empty(),
          ErrorCode::invalid_parameter, "training-study sizes must be positive");
  for (int m : study_sizes) require(m > 0, ErrorCode::invalid_parameter, "training sizes must be positive");
  require(correlation_snr > 0 && correlation_samples >= 10 && !correlation_rhos.empty(), ErrorCode::invalid_parameter,
          "invalid correlation-study settings");
  for (double r : correlation_rhos)
    require(std::abs(r) < 1.0, ErrorCode::invalid_parameter, "correlations must lie in (-1, 1)");
}

FeatureBank ExperimentConfig::bank() const { return build_bank(bank_widths, bank_freqs, bank_thetas, bank_phis); }

ObserverConfig ExperimentConfig::observer_base(const ObserverVariant& variant) const {
  ObserverConfig c;
  c.prewhitening = variant.prewhitening;
  c.threshold_strategy = variant.thresholds;
  c.max_candidates = max_candidates;
  c.min_separation = min_separation;
  c.search_margin = search_margin >= 0 ? search_margin : static_cast<int>(std::ceil(phantom.margin()));
  c.localization_radius = localization_radius;
  return c;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  os << "name=" << name << "\nseed=" << seed << "\n" << phantom.canonical() << "\n" << pinhole.canonical() << "\n";
  os << "bank=" << join(bank_widths) << "|" << join(bank_freqs) << "|" << join(bank_thetas) << "|" << join(bank_phis)
     << "|" << refined_bank_size << "\n";
  os << "variants=";
  for (const auto& v : variants) os << v.name << ";";
  os << "\nobserver=" << features_per_stage << "|" << max_candidates << "|" << fmt(min_separation) << "|"
     << search_margin << "|" << fmt(localization_radius) << "\n";
  os << "sweep=" << join(diameters) << "|" << design_pairs << "|" << train_pairs << "|" << test_pairs << "|" << trials
     << "\n";
  os << "study=" << fmt(study_diameter) << "|" << join(study_sizes) << "|" << study_trials << "|" << study_test_pairs
     << "|" << study_design_pairs << "\n";
  os << "correlation=" << fmt(correlation_snr) << "|" << join(correlation_rhos) << "|" << correlation_samples << "\n";
  return os.str();
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical())); }

ExperimentConfig parse_experiment_config(const std::string& text) {
  auto sections = parse_config_sections(text, {"experiment", "phantom", "pinhole", "bank", "observer", "sweep",
                                               "training_study", "correlation"});
  auto section = [&sections](const std::string& name) -> ConfigSection& { return sections.at(name); };

  ExperimentConfig c;
  {
    auto& s = section("experiment");
    s.read("name", c.name);
    s.read("seed", c.seed);
    s.read("output_dir", c.output_dir);
    s.read("threads", c.threads);
    s.finish();
  }
  {
    auto& s = section("phantom");
    s.read("width", c.phantom.width);
    s.read("height", c.phantom.height);
    s.read("pixel_size", c.phantom.pixel_size);
    s.read("lump_mean", c.phantom.lump_mean);
    s.read("lump_fwhm", c.phantom.lump_fwhm);
    s.read("lesion_fwhm", c.phantom.lesion_fwhm);
    s.read("lesion_amplitude", c.phantom.lesion_amplitude);
    s.read("dc_offset", c.phantom.dc_offset);
    s.read("lesion_margin", c.phantom.lesion_margin);
    s.finish();
  }
  {
    auto& s = section("pinhole");
    s.read("base_counts", c.pinhole.base_counts);
    s.read("poisson_noise", c.pinhole.poisson_noise);
    s.finish();
  }
  {
    auto& s = section("bank");
    s.read("widths", c.bank_widths);
    s.read("freqs", c.bank_freqs);
    s.read("thetas", c.bank_thetas);
    s.read("phis", c.bank_phis);
    s.read("refined_size", c.refined_bank_size);
    s.finish();
  }
  {
    auto& s = section("observer");
    std::vector<std::string> names;
    s.read("variants", names);
    if (!names.empty()) {
      c.variants.clear();
      for (const auto& n : names) c.variants.push_back(parse_variant(n));
    }
    s.read("features_per_stage", c.features_per_stage);
    s.read("max_candidates", c.max_candidates);
    s.read("min_separation", c.min_separation);
    s.read("search_margin", c.search_margin);
    s.read("localization_radius", c.localization_radius);
    s.finish();
  }
  {
    auto& s = section("sweep");
    s.read("diameters", c.diameters);
    s.read("design_pairs", c.design_pairs);
    s.read("train_pairs", c.train_pairs);
    s.read("test_pairs", c.test_pairs);
    s.read("trials", c.trials);
    s.finish();
  }
  {
    auto& s = section("training_study");
    s.read("diameter", c.study_diameter);
    s.read("sizes", c.study_sizes);
    s.read("trials", c.study_trials);
    s.read("test_pairs", c.study_test_pairs);
    s.read("design_pairs", c.study_design_pairs);
    s.finish();
  }
  {
    auto& s = section("correlation");
    s.read("snr", c.correlation_snr);
    s.read("rhos", c.correlation_rhos);
    s.read("samples", c.correlation_samples);
    s.finish();
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) { return parse_experiment_config(read_text_file(path)); }

}  // namespace vsmo
