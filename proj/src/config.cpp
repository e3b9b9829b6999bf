#include "liftdig/config.hpp"

#include <filesystem>
#include <stdexcept>

#include "liftdig/io_util.hpp"

namespace liftdig {

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["terrain"] = c.terrain;
  j["sim"] = c.sim;
  j["excitation"] = c.excitation;
  j["collect"] = {{"n_terrains", c.n_terrains}, {"train_samples", c.train_samples}, {"test_samples", c.test_samples}};
  j["train"] = {{"variants", c.variants}, {"ridge", c.regress.ridge}, {"p_lo", c.regress.p_lo}, {"p_hi", c.regress.p_hi}};
  j["eval"] = {{"horizons", c.horizons}, {"starts", c.starts}};
  j["dig"] = {{"controller_variant", c.controller_variant},
              {"path", c.path},
              {"options", c.dig},
              {"mpcc", c.mpcc},
              {"q_theta", c.q_theta},
              {"scoops", c.scoops}};
  j["sweep"] = {{"sizes", c.sweep_sizes},
                {"repeats", c.sweep_repeats},
                {"dig_terrains", c.sweep_dig_terrains},
                {"q_theta", c.sweep_q_theta},
                {"threads", c.threads}};
  j["files"] = {{"terrain", c.terrain_file},
                {"train", c.train_file},
                {"test", c.test_file},
                {"models", c.model_dir},
                {"reports", c.report_dir}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  c = d;
  c.seed = j.value("seed", d.seed);
  c.out = j.value("out", d.out);
  if (j.contains("terrain")) c.terrain = j["terrain"].get<TerrainGenParams>();
  if (j.contains("sim")) c.sim = j["sim"].get<SimParams>();
  if (j.contains("excitation")) c.excitation = j["excitation"].get<ExcitationConfig>();
  const auto empty = nlohmann::json::object();
  const auto& co = j.contains("collect") ? j["collect"] : empty;
  c.n_terrains = co.value("n_terrains", d.n_terrains);
  c.train_samples = co.value("train_samples", d.train_samples);
  c.test_samples = co.value("test_samples", d.test_samples);
  const auto& tr = j.contains("train") ? j["train"] : empty;
  c.variants = tr.value("variants", d.variants);
  c.regress.ridge = tr.value("ridge", d.regress.ridge);
  c.regress.p_lo = tr.value("p_lo", d.regress.p_lo);
  c.regress.p_hi = tr.value("p_hi", d.regress.p_hi);
  const auto& ev = j.contains("eval") ? j["eval"] : empty;
  c.horizons = ev.value("horizons", d.horizons);
  c.starts = ev.value("starts", d.starts);
  const auto& dg = j.contains("dig") ? j["dig"] : empty;
  c.controller_variant = dg.value("controller_variant", d.controller_variant);
  if (dg.contains("path")) c.path = dg["path"].get<DigPathSpec>();
  if (dg.contains("options")) c.dig = dg["options"].get<DigOptions>();
  if (dg.contains("mpcc")) c.mpcc = dg["mpcc"].get<MpccConfig>();
  c.q_theta = dg.value("q_theta", d.q_theta);
  c.scoops = dg.value("scoops", d.scoops);
  const auto& sw = j.contains("sweep") ? j["sweep"] : empty;
  c.sweep_sizes = sw.value("sizes", d.sweep_sizes);
  c.sweep_repeats = sw.value("repeats", d.sweep_repeats);
  c.sweep_dig_terrains = sw.value("dig_terrains", d.sweep_dig_terrains);
  c.sweep_q_theta = sw.value("q_theta", d.sweep_q_theta);
  c.threads = sw.value("threads", d.threads);
  const auto& fi = j.contains("files") ? j["files"] : empty;
  c.terrain_file = fi.value("terrain", d.terrain_file);
  c.train_file = fi.value("train", d.train_file);
  c.test_file = fi.value("test", d.test_file);
  c.model_dir = fi.value("models", d.model_dir);
  c.report_dir = fi.value("reports", d.report_dir);
  c.validate();
}

std::string ExperimentConfig::hash() const {
  nlohmann::json j = *this;
  j.erase("out");
  j["sweep"].erase("threads");
  return fnv1a_hex(j.dump());
}

std::string ExperimentConfig::path_of(const std::string& name) const {
  return (std::filesystem::path(out) / name).string();
}

void ExperimentConfig::validate() const {
  sim.validate();
  excitation.validate();
  mpcc.validate();
  if (n_terrains < 1) throw std::invalid_argument("config: collect.n_terrains must be at least 1");
  if (train_samples < 2 || test_samples < 2) throw std::invalid_argument("config: sample counts must be at least 2");
  if (variants.empty()) throw std::invalid_argument("config: train.variants is empty");
  for (int h : horizons)
    if (h < 1) throw std::invalid_argument("config: eval.horizons must be >= 1");
  if (starts < 1) throw std::invalid_argument("config: eval.starts must be at least 1");
  if (scoops < 1) throw std::invalid_argument("config: dig.scoops must be at least 1");
  if (q_theta.empty()) throw std::invalid_argument("config: dig.q_theta is empty");
  for (int s : sweep_sizes)
    if (s < 2) throw std::invalid_argument("config: sweep.sizes must be >= 2");
}

ExperimentConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": invalid JSON: " + e.what());
  }
  return j.get<ExperimentConfig>();
}

}  // namespace liftdig
