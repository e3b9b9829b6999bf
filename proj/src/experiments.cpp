#include "liftdig/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <thread>

#include "liftdig/io_util.hpp"
#include "liftdig/model_io.hpp"

namespace liftdig {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kVariants{"dfl", "dfl_structured", "koopman_poly", "koopman_dfl_poly"};

void require_file(const std::string& path, const std::string& producer) {
  if (!fs::exists(path)) throw MissingDependency("missing dependency: " + path + " (run '" + producer + "' first)");
}

std::string file_hash(const std::string& path) { return fnv1a_hex(read_file(path)); }

void write_json(const std::string& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

std::string report_path(const ExperimentConfig& c, const std::string& name) {
  return (fs::path(c.out) / c.report_dir / name).string();
}

std::string model_path(const ExperimentConfig& c, const std::string& variant) {
  return (fs::path(c.out) / c.model_dir / (variant + ".json")).string();
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json dig_summary(const DigResult& r) {
  return {{"completed", r.completed},
          {"aborted", r.aborted},
          {"fault", r.fault},
          {"steps", r.rows.size()},
          {"completion_time", r.completed ? num(r.completion_time) : nlohmann::json(nullptr)},
          {"mean_path_error", num(r.mean_path_error)},
          {"max_path_error", num(r.max_path_error)},
          {"min_vx_after_contact", num(r.min_vx)},
          {"fallbacks", r.fallbacks},
          {"max_iter_steps", r.max_iter_steps},
          {"bounds_ok", r.bounds_ok}};
}

}  // namespace

bool is_known_variant(const std::string& v) { return std::find(kVariants.begin(), kVariants.end(), v) != kVariants.end(); }

TrainedModel train_variant(const Dataset& d, const std::string& variant, const RegressOptions& opt) {
  TrainedModel out;
  if (variant == "dfl_structured") {
    StructuredFit fit = dfl_structured_fit(d, opt.ridge);
    out.model = discretize(fit.model, dataset_dt(d));
    out.model.bounds = compute_bounds(d, Lifting::Dfl, opt.p_lo, opt.p_hi);
    RegressResult r;
    r.model = out.model;
    r.pairs = fit.samples;
    r.rank = fit.rank;
    r.residual_rms = fit.residual_rms;
    r.warnings = fit.warnings;
    double rho = spectral_radius(out.model);
    if (rho > 1) r.warnings.push_back("identified model is unstable (spectral radius " + fmt_double(rho) + ")");
    out.report = training_report(r, variant);
    return out;
  }
  if (!is_known_variant(variant)) throw std::invalid_argument("unknown model variant '" + variant + "'");
  RegressResult r = regress_lifted(d, lifting_from_string(variant), opt);
  out.model = r.model;
  out.report = training_report(r, variant);
  return out;
}

CollectPlan train_plan(const ExperimentConfig& c, std::uint64_t seed) {
  CollectPlan p;
  p.n_terrains = c.n_terrains;
  p.target_samples = c.train_samples;
  p.seed = seed;
  p.terrain = c.terrain;
  p.excitation = c.excitation;
  p.sim = c.sim;
  return p;
}

CollectPlan test_plan(const ExperimentConfig& c, std::uint64_t seed) {
  CollectPlan p = train_plan(c, seed);
  p.target_samples = c.test_samples;
  return p;
}

HeightField dig_field(const ExperimentConfig& c, std::uint64_t seed) {
  TerrainGenParams p = c.terrain;
  p.seed = seed;
  return random_terrain(p);
}

ContourPath dig_path(const ExperimentConfig& c, const SurfaceSpline& surface) {
  return ContourPath::from_waypoints(dig_waypoints(surface, c.path));
}

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
  int t = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  t = std::min(t, n);
  if (t <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  for (int w = 0; w < t; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

nlohmann::json cmd_terrain(const ExperimentConfig& cfg) {
  TerrainGenParams p = cfg.terrain;
  p.seed = derive_seed(cfg.seed, 3);
  HeightField f = random_terrain(p);
  const std::string path = cfg.path_of(cfg.terrain_file);
  save_terrain(path, f, p);
  nlohmann::json s = {{"command", "terrain"},     {"config_hash", cfg.hash()}, {"file", path},
                      {"terrain_seed", p.seed},    {"nodes", f.size()},         {"file_hash", file_hash(path)}};
  write_json(report_path(cfg, "terrain.json"), s);
  return s;
}

nlohmann::json cmd_collect(const ExperimentConfig& cfg) {
  nlohmann::json s = {{"command", "collect"}, {"config_hash", cfg.hash()}};
  bool partial = false;
  for (auto [name, plan, file] : {std::tuple{"train", train_plan(cfg, derive_seed(cfg.seed, 1)), cfg.train_file},
                                  std::tuple{"test", test_plan(cfg, derive_seed(cfg.seed, 2)), cfg.test_file}}) {
    Dataset d = collect_dataset(plan);
    d.manifest["config_hash"] = cfg.hash();
    int flagged = 0;
    for (const auto& e : d.episodes)
      if (!e.diagnostic.empty()) ++flagged;
    d.manifest["partial"] = flagged > 0;
    partial = partial || flagged > 0;
    const std::string path = cfg.path_of(file);
    save_dataset(d, path);
    s[name] = {{"file", path},
               {"samples", d.samples()},
               {"pairs", d.pairs()},
               {"episodes", d.episodes.size()},
               {"flagged_episodes", flagged},
               {"file_hash", file_hash(path)}};
  }
  s["partial"] = partial;
  write_json(report_path(cfg, "collect.json"), s);
  return s;
}

nlohmann::json cmd_train(const ExperimentConfig& cfg) {
  const std::string data = cfg.path_of(cfg.train_file);
  require_file(data, "collect");
  Dataset d = load_dataset(data);
  nlohmann::json s = {{"command", "train"}, {"config_hash", cfg.hash()}, {"dataset_hash", file_hash(data)}};
  s["models"] = nlohmann::json::object();
  for (const auto& v : cfg.variants) {
    TrainedModel t = train_variant(d, v, cfg.regress);
    const std::string path = model_path(cfg, v);
    save_model(path, t.model);
    t.report["config_hash"] = cfg.hash();
    t.report["model_hash"] = file_hash(path);
    write_json(report_path(cfg, "train_" + v + ".json"), t.report);
    s["models"][v] = {{"file", path}, {"model_hash", file_hash(path)}, {"order", t.model.order()},
                      {"spectral_radius", t.report["spectral_radius"]}, {"warnings", t.report["warnings"]}};
  }
  write_json(report_path(cfg, "train.json"), s);
  return s;
}

nlohmann::json cmd_eval(const ExperimentConfig& cfg) {
  const std::string data = cfg.path_of(cfg.test_file);
  require_file(data, "collect");
  for (const auto& v : cfg.variants) require_file(model_path(cfg, v), "train");
  Dataset test = load_dataset(data);
  auto surfaces = splines_for(test, cfg.terrain);
  const std::string hash = cfg.hash();
  std::string csv;
  nlohmann::json s = {{"command", "eval"}, {"config_hash", hash}, {"dataset_hash", file_hash(data)}};
  s["variants"] = nlohmann::json::object();
  for (std::size_t k = 0; k < cfg.variants.size(); ++k) {
    const auto& v = cfg.variants[k];
    const std::string mp = model_path(cfg, v);
    DiscreteLiftedModel m = load_model(mp);
    const std::string mh = file_hash(mp);
    MseTable t = eval_prediction_mse(m, test, surfaces, cfg.horizons, cfg.starts, derive_seed(cfg.seed, 4));
    std::string part = mse_csv(t, "variant,config_hash,model_hash", v + "," + hash + "," + mh);
    csv += k == 0 ? part : part.substr(part.find('\n') + 1);
    nlohmann::json mean = nlohmann::json::object();
    for (std::size_t h = 0; h < t.horizons.size(); ++h) mean[std::to_string(t.horizons[h])] = t.mean_at(h);
    s["variants"][v] = {{"model_hash", mh}, {"starts_used", t.starts_used}, {"starts_available", t.starts_available},
                        {"mean_mse", mean}};
  }
  write_file(report_path(cfg, "mse.csv"), csv);
  write_json(report_path(cfg, "eval.json"), s);
  return s;
}

nlohmann::json cmd_dig(const ExperimentConfig& cfg) {
  const std::string tfile = cfg.path_of(cfg.terrain_file);
  const std::string mfile = model_path(cfg, cfg.controller_variant);
  require_file(tfile, "terrain");
  require_file(mfile, "train");
  HeightField field = load_terrain(tfile);
  SurfaceSpline surface = fit_spline(field);
  DiscreteLiftedModel model = load_model(mfile);
  ContourPath path = dig_path(cfg, surface);
  const std::string hash = cfg.hash();
  nlohmann::json s = {{"command", "dig"},         {"config_hash", hash},
                      {"model_hash", file_hash(mfile)}, {"terrain_hash", file_hash(tfile)},
                      {"variant", cfg.controller_variant}, {"path_length", path.length()}};
  bool partial = false;
  if (cfg.scoops <= 1) {
    s["runs"] = nlohmann::json::array();
    std::vector<DigResult> runs(cfg.q_theta.size());
    parallel_for(static_cast<int>(runs.size()), cfg.threads, [&](int i) {
      MpccConfig m = cfg.mpcc;
      m.q_theta = cfg.q_theta[static_cast<std::size_t>(i)];
      runs[static_cast<std::size_t>(i)] = run_dig(model, surface, path, m, cfg.sim, cfg.dig);
    });
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::string log = report_path(cfg, "dig_qtheta_" + fmt_double(cfg.q_theta[i]) + ".csv");
      write_file(log, dig_log_csv(runs[i], hash));
      nlohmann::json r = dig_summary(runs[i]);
      r["q_theta"] = cfg.q_theta[i];
      r["log"] = log;
      partial = partial || runs[i].aborted || runs[i].fault;
      s["runs"].push_back(r);
    }
  } else {
    MpccConfig m = cfg.mpcc;
    m.q_theta = cfg.q_theta.front();
    MultiScoopResult ms = multi_scoop(model, field, path, m, cfg.sim, cfg.dig, cfg.scoops);
    std::string csv = "cycle,volume_before,volume_after,completed,mean_path_error,config_hash\n";
    std::string prof = "x,target,h0";
    for (std::size_t k = 0; k < ms.cycles.size(); ++k) prof += ",h" + std::to_string(k + 1);
    prof += ",config_hash\n";
    for (std::size_t k = 0; k < ms.cycles.size(); ++k) {
      const ScoopCycle& c = ms.cycles[k];
      csv += std::to_string(k + 1) + "," + fmt_double(c.volume_before) + "," + fmt_double(c.volume_after) + "," +
             (c.run.completed ? "1" : "0") + "," + fmt_double(c.run.mean_path_error) + "," + hash + "\n";
      write_file(report_path(cfg, "dig_scoop_" + std::to_string(k + 1) + ".csv"), dig_log_csv(c.run, hash));
      partial = partial || c.run.aborted || c.run.fault;
    }
    for (std::size_t i = 0; i < field.size(); ++i) {
      prof += fmt_double(field.x_at(i)) + "," + fmt_double(ms.target[i]) + "," + fmt_double(field.h[i]);
      for (const auto& c : ms.cycles) prof += "," + fmt_double(c.after.h[i]);
      prof += "," + hash + "\n";
    }
    write_file(report_path(cfg, "scoops.csv"), csv);
    write_file(report_path(cfg, "profiles.csv"), prof);
    s["initial_volume"] = ms.initial_volume;
    s["cycles"] = nlohmann::json::array();
    for (const auto& c : ms.cycles) {
      nlohmann::json r = dig_summary(c.run);
      r["volume_before"] = c.volume_before;
      r["volume_after"] = c.volume_after;
      s["cycles"].push_back(r);
    }
  }
  s["partial"] = partial;
  write_json(report_path(cfg, "dig.json"), s);
  return s;
}

nlohmann::json cmd_sweep(const ExperimentConfig& cfg) {
  const std::string hash = cfg.hash();
  const int max_size = *std::max_element(cfg.sweep_sizes.begin(), cfg.sweep_sizes.end());
  // One training pool per repeat; smaller sets are prefixes of it.
  std::vector<Dataset> pools(static_cast<std::size_t>(cfg.sweep_repeats));
  parallel_for(cfg.sweep_repeats, cfg.threads, [&](int r) {
    CollectPlan p = train_plan(cfg, derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(r)));
    p.target_samples = max_size;
    pools[static_cast<std::size_t>(r)] = collect_dataset(p);
  });
  Dataset test = collect_dataset(test_plan(cfg, derive_seed(cfg.seed, 2)));
  auto surfaces = splines_for(test, cfg.terrain);
  std::vector<SurfaceSpline> dig_surfaces;
  std::vector<ContourPath> dig_paths;
  for (int t = 0; t < cfg.sweep_dig_terrains; ++t) {
    dig_surfaces.push_back(fit_spline(dig_field(cfg, derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(t)))));
    dig_paths.push_back(dig_path(cfg, dig_surfaces.back()));
  }

  struct Job {
    int size = 0, rep = 0;
    std::string variant;
    std::size_t pairs = 0;
    double mse = nan(), path_error = nan();
    int completed = 0;
    std::string error;
  };
  std::vector<Job> jobs;
  for (int size : cfg.sweep_sizes)
    for (int r = 0; r < cfg.sweep_repeats; ++r)
      for (const auto& v : cfg.variants) {
        Job j;
        j.size = size;
        j.rep = r;
        j.variant = v;
        jobs.push_back(j);
      }
  parallel_for(static_cast<int>(jobs.size()), cfg.threads, [&](int i) {
    Job& j = jobs[static_cast<std::size_t>(i)];
    Dataset d = take_samples(pools[static_cast<std::size_t>(j.rep)], static_cast<std::size_t>(j.size));
    j.pairs = d.pairs();
    TrainedModel t;
    try {
      t = train_variant(d, j.variant, cfg.regress);
    } catch (const std::invalid_argument& e) {
      j.error = e.what();
      return;
    }
    MseTable m = eval_prediction_mse(t.model, test, surfaces, {20}, cfg.starts, derive_seed(cfg.seed, 4));
    j.mse = m.mean_at(0);
    if (j.variant != cfg.controller_variant) return;
    MpccConfig mc = cfg.mpcc;
    mc.q_theta = cfg.sweep_q_theta;
    double sum = 0;
    for (std::size_t k = 0; k < dig_surfaces.size(); ++k) {
      DigResult r = run_dig(t.model, dig_surfaces[k], dig_paths[k], mc, cfg.sim, cfg.dig);
      sum += std::isfinite(r.mean_path_error) ? r.mean_path_error : 1.0;
      j.completed += r.completed ? 1 : 0;
    }
    j.path_error = dig_surfaces.empty() ? nan() : sum / static_cast<double>(dig_surfaces.size());
  });

  std::string csv = "size,repeat,variant,train_pairs,mse_h20,path_error,completed,error,config_hash\n";
  nlohmann::json s = {{"command", "sweep"}, {"config_hash", hash}, {"sizes", cfg.sweep_sizes}};
  nlohmann::json agg = nlohmann::json::object();
  for (const auto& j : jobs) {
    csv += std::to_string(j.size) + "," + std::to_string(j.rep) + "," + j.variant + "," + std::to_string(j.pairs) +
           "," + fmt_double(j.mse) + "," + fmt_double(j.path_error) + "," + std::to_string(j.completed) + "," +
           (j.error.empty() ? "" : "refused") + "," + hash + "\n";
  }
  for (const auto& v : cfg.variants) {
    nlohmann::json per = nlohmann::json::array();
    for (int size : cfg.sweep_sizes) {
      double ms = 0, pe = 0;
      int nm = 0, np = 0;
      for (const auto& j : jobs)
        if (j.variant == v && j.size == size) {
          if (std::isfinite(j.mse)) ms += j.mse, ++nm;
          if (std::isfinite(j.path_error)) pe += j.path_error, ++np;
        }
      per.push_back({{"size", size}, {"mse_h20", nm ? num(ms / nm) : nlohmann::json(nullptr)},
                     {"path_error", np ? num(pe / np) : nlohmann::json(nullptr)}});
    }
    agg[v] = per;
  }
  s["mean"] = agg;
  write_file(report_path(cfg, "sweep.csv"), csv);
  write_json(report_path(cfg, "sweep.json"), s);
  return s;
}

}  // namespace liftdig
