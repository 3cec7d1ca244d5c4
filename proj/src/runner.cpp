#include "fedinv/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "fedinv/attacks.hpp"
#include "fedinv/autodiff.hpp"
#include "fedinv/data_io.hpp"
#include "fedinv/diagnostics.hpp"
#include "fedinv/errors.hpp"
#include "fedinv/evaluation.hpp"
#include "fedinv/rng.hpp"

namespace fedinv {

namespace {

std::string fmt_val(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_wallclock(double s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", s);
  return buf;
}

// Enough fixed decimals to separate adjacent grid points, at least two.
int alpha_decimals(std::size_t grid) {
  int d = 2;
  std::size_t denom = 100;
  while (denom < grid - 1) {
    denom *= 10;
    ++d;
  }
  return d;
}

std::string fmt_alpha(double a, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, a);
  return buf;
}

std::string seed_hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Worker pool over independent tasks; fn(i) must only touch state owned by
// task i. The first exception wins and cancels the remaining tasks.
template <typename Fn>
void run_tasks(std::size_t count, std::size_t workers, Fn&& fn) {
  if (count == 0) return;
  workers = std::min(std::max<std::size_t>(workers, 1), count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= count) break;
          fn(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
        next.store(count);
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string ensure_outdir(const ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec)
    throw std::runtime_error("cannot create output directory " + cfg.out_dir +
                             ": " + ec.message());
  const std::string provenance = cfg.out_dir + "/config_used.ini";
  std::ofstream out(provenance, std::ios::trunc);
  out << render_config(cfg);
  if (!out) throw std::runtime_error("cannot write " + provenance);
  return cfg.out_dir;
}

void check_method(const std::string& method) {
  if (method != "ig" && method != "sme" && method != "sim")
    throw ConfigError("unknown attack method '" + method +
                      "' (expected ig, sme, or sim)");
}

void check_sim_protocol(const LocalUpdate& update) {
  if (!update.meta)
    throw ConfigError(
        "the simulation baseline replays the client's local training and "
        "therefore needs the protocol metadata (epochs E, batch size B, "
        "learning rate eta) stored with the update; this artifact carries none");
}

struct AttackOutcome {
  AttackResult result;
  PairingReport report;
  double wallclock = 0.0;
};

AttackOutcome attack_once(const ClientArtifact& a, const std::string& method,
                          const ExperimentConfig& cfg, std::uint64_t attack_seed) {
  check_method(method);
  if (method == "sim") check_sim_protocol(a.update);
  AttackConfig ac = cfg.attack;
  ac.seed = attack_seed;
  AttackOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  if (method == "ig")
    out.result = attack_ig(a.spec, a.update, a.data.labels, ac);
  else if (method == "sme")
    out.result = attack_sme(a.spec, a.update, a.data.labels, ac);
  else
    out.result = attack_sim(a.spec, a.update, a.data.labels, ac, *a.update.meta);
  out.wallclock =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.report = pair_and_score(out.result.reconstructed, a.data.images);
  out.report.final_lsim = out.result.final_lsim;
  return out;
}

const std::vector<std::string> kAttackHeader = {
    "dataset", "E", "N", "B", "T", "R", "method", "seed",
    "final_Lsim", "mean_PSNR", "wallclock_s"};

std::vector<std::string> attack_row(const ClientArtifact& a, const std::string& method,
                                    std::uint64_t seed, const AttackOutcome& out) {
  std::string e_cell, b_cell, t_cell;
  if (a.update.meta) {
    e_cell = std::to_string(a.update.meta->epochs);
    b_cell = std::to_string(a.update.meta->batch);
    t_cell = std::to_string(local_steps(a.update.n, *a.update.meta));
  } else if (!a.update.step_gradients.empty()) {
    t_cell = std::to_string(a.update.step_gradients.size());
  }
  return {a.data.provenance,
          e_cell,
          std::to_string(a.update.n),
          b_cell,
          t_cell,
          "1",
          method,
          std::to_string(seed),
          fmt_val(out.report.final_lsim),
          fmt_val(out.report.mean_psnr),
          fmt_wallclock(out.wallclock)};
}

Tensor flow_grad(const FlatLoss& loss, const Tensor& w) {
  Var wv(w, true);
  return grad(loss(wv), {wv})[0].value();
}

// The per-alpha collinearity residual series behind flow2d_check, on the
// same integrator grid: alpha spacing equals the integration step count.
void flow_series(const std::string& name, const Tensor& quad,
                 const DiagnoseConfig& dc,
                 std::vector<std::vector<std::string>>& rows) {
  if (dc.flow_resolution > dc.flow_duration)
    throw ConfigError(
        "diagnose.flow_resolution must not exceed diagnose.flow_duration");
  const auto steps = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(dc.flow_duration / dc.flow_resolution)));
  if (steps > 10'000'000)
    throw ResourceError("flow2d series: " + std::to_string(steps) +
                        " integration steps exceed the 1e7 cap; coarsen "
                        "diagnose.flow_resolution");

  const FlatLoss loss = quadratic_loss(quad, Tensor({2}));
  const Tensor w0({2}, {1.0, 1.0});
  const FlatTrajectory traj = run_gd(loss, w0, dc.flow_resolution, steps);
  const Tensor& wT = traj.iterates.back();
  const double u0 = w0.values()[0] - wT.values()[0];
  const double u1 = w0.values()[1] - wT.values()[1];
  const double un = std::sqrt(u0 * u0 + u1 * u1);
  if (un == 0.0)
    throw DegenerateUpdateError("flow2d series: the flow did not move from the start");

  const std::size_t grid = steps + 1;
  const int dec = alpha_decimals(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    const double alpha = static_cast<double>(i) / static_cast<double>(grid - 1);
    Tensor mid({2});
    for (std::size_t j = 0; j < 2; ++j)
      mid.values()[j] = alpha * w0.values()[j] + (1.0 - alpha) * wT.values()[j];
    const Tensor g = flow_grad(loss, mid);
    const double gn =
        std::sqrt(g.values()[0] * g.values()[0] + g.values()[1] * g.values()[1]);
    if (gn == 0.0) continue;
    const double residual =
        std::abs(g.values()[0] * u1 - g.values()[1] * u0) / (gn * un);
    rows.push_back({name, fmt_alpha(alpha, dec), fmt_val(residual)});
  }
}

struct SeriesStats {
  double mean = 0.0;
  double stderr_ = 0.0;
};

SeriesStats series_stats(const std::vector<double>& xs) {
  SeriesStats s;
  const double k = static_cast<double>(xs.size());
  for (double x : xs) s.mean += x;
  s.mean /= k;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
  }
  return s;
}

}  // namespace

RepeatSeeds repeat_seeds(std::uint64_t master, std::size_t repeat) {
  RepeatSeeds s;
  s.base = split_seed(master, repeat);
  s.data = split_seed(s.base, 1);
  s.init = split_seed(s.base, 2);
  s.client = split_seed(s.base, 3);
  s.attack = split_seed(s.base, 4);
  return s;
}

ClientArtifact build_round(const ExperimentConfig& cfg, const RepeatSeeds& seeds) {
  ClientArtifact a;
  if (cfg.data.source == "synthetic") {
    a.data = synth_dataset(cfg.data.kind, cfg.data.n, cfg.data.h, cfg.data.w,
                           cfg.data.classes, seeds.data);
  } else {
    a.data = load_idx(cfg.data.images_path, cfg.data.labels_path, cfg.data.take);
  }
  for (std::size_t y : a.data.labels)
    if (y >= cfg.data.classes)
      throw ConfigError("data.classes = " + std::to_string(cfg.data.classes) +
                        " but the data holds a label " + std::to_string(y));

  a.spec = cfg.model;
  a.spec.in_channels = a.data.images.dim(1);
  a.spec.in_h = a.data.images.dim(2);
  a.spec.in_w = a.data.images.dim(3);
  a.spec.classes = cfg.data.classes;
  try {
    validate_spec(a.spec);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model configuration rejected: ") + e.what());
  }

  ClientConfig client = cfg.client;
  client.seed = seeds.client;
  const ParamVector w0 = init_weights(a.spec, seeds.init);
  a.update = client_update(a.spec, w0, a.data, client, cfg.record_steps);
  if (!cfg.share_protocol) a.update.meta.reset();
  return a;
}

std::vector<std::string> cmd_train_client(const ExperimentConfig& cfg) {
  const std::string dir = ensure_outdir(cfg);
  std::vector<std::string> paths(cfg.repeats);
  run_tasks(cfg.repeats, cfg.workers, [&](std::size_t i) {
    const RepeatSeeds seeds = repeat_seeds(cfg.master_seed, i);
    const ClientArtifact a = build_round(cfg, seeds);
    const std::string path = dir + "/client_" + seed_hex(seeds.base) + ".bin";
    save_artifact(path, a);
    paths[i] = path;
  });
  return paths;
}

std::string cmd_attack(const std::string& artifact_path, const std::string& method,
                       const ExperimentConfig& cfg) {
  check_method(method);
  const ClientArtifact a = load_artifact(artifact_path);
  if (method == "sim") check_sim_protocol(a.update);
  const std::string dir = ensure_outdir(cfg);
  const std::string img_dir = dir + "/images";
  std::filesystem::create_directories(img_dir);
  const std::string stem = std::filesystem::path(artifact_path).stem().string();

  std::vector<std::vector<std::string>> rows(cfg.repeats);
  std::vector<AttackOutcome> outs(cfg.repeats);
  run_tasks(cfg.repeats, cfg.workers, [&](std::size_t i) {
    const RepeatSeeds seeds = repeat_seeds(cfg.master_seed, i);
    outs[i] = attack_once(a, method, cfg, seeds.attack);
    rows[i] = attack_row(a, method, seeds.base, outs[i]);
  });

  for (std::size_t i = 0; i < cfg.repeats; ++i)
    dump_images(outs[i].result.reconstructed, img_dir,
                stem + "_" + method + "_" +
                    seed_hex(repeat_seeds(cfg.master_seed, i).base) + "_");
  dump_images(a.data.images, img_dir, stem + "_original_");

  const std::string csv = dir + "/attack_" + method + ".csv";
  write_csv(csv, kAttackHeader, rows);
  return csv;
}

std::string cmd_diagnose(const std::string& artifact_path, const std::string& mode,
                         const ExperimentConfig& cfg) {
  const std::string dir = ensure_outdir(cfg);
  const std::string csv = dir + "/diagnose_" + mode + ".csv";

  if (mode == "flow2d") {
    std::vector<std::vector<std::string>> rows;
    flow_series("isotropic", Tensor({2, 2}, {1, 0, 0, 1}), cfg.diagnose, rows);
    flow_series("anisotropic", Tensor({2, 2}, {1, 0, 0, 10}), cfg.diagnose, rows);
    write_csv(csv, {"setting", "alpha", "residual"}, rows);
    return csv;
  }

  const ClientArtifact a = load_artifact(artifact_path);
  const std::string setting = std::filesystem::path(artifact_path).stem().string();

  if (mode == "ratio") {
    if (a.update.step_gradients.empty())
      throw ConfigError(
          "the artifact has no recorded step gradients; re-run train-client "
          "with run.record_steps = true");
    const std::vector<double> series = projection_ratio_series(a.update);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(series.size());
    for (std::size_t t = 0; t < series.size(); ++t)
      rows.push_back({setting, std::to_string(t + 1), fmt_val(series[t])});
    write_csv(csv, {"setting", "t", "ratio"}, rows);
  } else if (mode == "sweep") {
    const std::vector<AlphaPoint> pts =
        alpha_sweep(a.spec, a.update, a.data, cfg.diagnose.grid);
    const int dec = alpha_decimals(cfg.diagnose.grid);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(pts.size());
    for (const AlphaPoint& p : pts)
      rows.push_back({setting, fmt_alpha(p.alpha, dec), fmt_val(p.cosim)});
    write_csv(csv, {"setting", "alpha", "cosim"}, rows);
  } else if (mode == "bounds") {
    if (!a.update.meta)
      throw ConfigError(
          "bounds mode estimates constants by replaying gradient descent and "
          "needs the protocol metadata (eta) stored with the update");
    const FlatLoss loss = model_flat_loss(a.spec, a.data);
    const Tensor w0(std::vector<std::size_t>{a.update.w0.numel()},
                    a.update.w0.values());
    const std::size_t steps = local_steps(a.update.n, *a.update.meta);
    const FlatTrajectory traj = run_gd(loss, w0, a.update.meta->eta, steps);
    const BoundInputs bi =
        estimate_bound_inputs(traj, loss, a.update.meta->eta, cfg.diagnose.loss_floor);

    std::vector<std::vector<std::string>> rows;
    rows.push_back({setting, "G2", fmt_val(bi.G2)});
    rows.push_back({setting, "L", fmt_val(bi.L)});
    rows.push_back({setting, "beta", fmt_val(bi.beta)});
    rows.push_back({setting, "gamma", fmt_val(bi.gamma)});
    rows.push_back({setting, "eta", fmt_val(bi.eta)});
    rows.push_back({setting, "T", std::to_string(bi.T)});
    rows.push_back({setting, "loss_w0", fmt_val(bi.loss_w0)});
    rows.push_back({setting, "loss_wT", fmt_val(bi.loss_wT)});
    rows.push_back({setting, "E_max", fmt_val(bi.E_max)});
    rows.push_back({setting, "loss_floor", fmt_val(bi.loss_floor)});
    try {
      rows.push_back({setting, "bound_gd", fmt_val(eval_bound_gd(bi))});
    } catch (const std::exception& e) {
      rows.push_back({setting, "bound_gd_error", e.what()});
    }
    try {
      const SgdBound s = eval_bound_sgd(bi);
      rows.push_back({setting, "bound_sgd", fmt_val(s.bound)});
      rows.push_back({setting, "probability", fmt_val(s.probability)});
    } catch (const std::exception& e) {
      rows.push_back({setting, "bound_sgd_error", e.what()});
    }
    write_csv(csv, {"setting", "key", "value"}, rows);
  } else {
    throw ConfigError("unknown diagnose mode '" + mode +
                      "' (expected ratio, sweep, bounds, or flow2d)");
  }
  return csv;
}

std::string cmd_compare(const ExperimentConfig& cfg) {
  if (cfg.methods.size() < 2)
    throw ConfigError("compare needs at least two methods in run.methods");
  for (const std::string& m : cfg.methods) check_method(m);
  if (!cfg.share_protocol)
    for (const std::string& m : cfg.methods)
      if (m == "sim")
        throw ConfigError(
            "run.share_protocol = false strips the protocol metadata the "
            "simulation baseline needs (epochs E, batch size B, learning rate "
            "eta); drop sim from run.methods or share the protocol");

  const std::string dir = ensure_outdir(cfg);
  const std::string img_dir = dir + "/images";
  std::filesystem::create_directories(img_dir);

  std::vector<ClientArtifact> rounds(cfg.repeats);
  run_tasks(cfg.repeats, cfg.workers, [&](std::size_t r) {
    rounds[r] = build_round(cfg, repeat_seeds(cfg.master_seed, r));
  });

  const std::size_t methods = cfg.methods.size();
  const std::size_t tasks = methods * cfg.repeats;
  std::vector<std::vector<std::string>> rows(tasks);
  std::vector<AttackOutcome> outs(tasks);
  run_tasks(tasks, cfg.workers, [&](std::size_t k) {
    const std::size_t mi = k / cfg.repeats;
    const std::size_t r = k % cfg.repeats;
    const RepeatSeeds seeds = repeat_seeds(cfg.master_seed, r);
    outs[k] = attack_once(rounds[r], cfg.methods[mi], cfg, seeds.attack);
    rows[k] = attack_row(rounds[r], cfg.methods[mi], seeds.base, outs[k]);
  });

  for (std::size_t k = 0; k < tasks; ++k) {
    const std::size_t mi = k / cfg.repeats;
    const std::size_t r = k % cfg.repeats;
    dump_images(outs[k].result.reconstructed, img_dir,
                "compare_" + cfg.methods[mi] + "_" +
                    seed_hex(repeat_seeds(cfg.master_seed, r).base) + "_");
  }
  for (std::size_t r = 0; r < cfg.repeats; ++r)
    dump_images(rounds[r].data.images, img_dir,
                "compare_original_" + seed_hex(repeat_seeds(cfg.master_seed, r).base) +
                    "_");

  write_csv(dir + "/attack.csv", kAttackHeader, rows);

  std::vector<SeriesStats> psnr(methods), lsim(methods);
  for (std::size_t mi = 0; mi < methods; ++mi) {
    std::vector<double> ps, ls;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      ps.push_back(outs[mi * cfg.repeats + r].report.mean_psnr);
      ls.push_back(outs[mi * cfg.repeats + r].report.final_lsim);
    }
    psnr[mi] = series_stats(ps);
    lsim[mi] = series_stats(ls);
  }

  std::vector<std::vector<std::string>> summary;
  for (std::size_t mi = 0; mi < methods; ++mi) {
    double best_other = 0.0;
    bool have = false;
    for (std::size_t mj = 0; mj < methods; ++mj) {
      if (mj == mi) continue;
      if (!have || psnr[mj].mean > best_other) best_other = psnr[mj].mean;
      have = true;
    }
    const std::string note =
        cfg.repeats == 1 ? "stderr is 0 by convention for a single repeat" : "";
    summary.push_back({cfg.methods[mi], std::to_string(cfg.repeats),
                       fmt_val(psnr[mi].mean), fmt_val(psnr[mi].stderr_),
                       fmt_val(lsim[mi].mean), fmt_val(lsim[mi].stderr_),
                       fmt_val(psnr[mi].mean - best_other), note});
  }
  const std::string csv = dir + "/compare.csv";
  write_csv(csv,
            {"method", "repeats", "mean_PSNR", "stderr_PSNR", "mean_Lsim",
             "stderr_Lsim", "delta_PSNR_vs_best_other", "note"},
            summary);
  return csv;
}

}  // namespace fedinv
