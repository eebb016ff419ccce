// Prints the noiseless landscape of a device file and, optionally, noisy
// optimality rates. Used when tuning the bundled presets.
//
//   calibrate data/presets/mate40pro.json --trials 200

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "aecs/experiments.hpp"

using namespace aecs;


namespace {

struct Fit {
  double penalty = 1e9;
  double with_rate = 0, without_rate = 0;
  SimulatedDevice device;
};

// Hard requirements first (each violation costs >= 100), then soft margins.
double structural_penalty(const SimulatedDevice& device, const SearchConfig& config,
                          const HeuristicParams& params) {
  double penalty = 0.0;
  const auto& cal = device.calibration;
  const auto optimum = true_optimum(device, config.epsilon);
  if (cal.expected_optimum && optimum != *cal.expected_optimum) penalty += 1000;

  const SimulatedDevice quiet = device.noiseless();
  SimulatedProvider provider(quiet, RngStream(1));
  const auto result = aecs_search(provider, quiet.topology, config, params);
  if (result.chosen != optimum) penalty += 500;
  if (cal.expected_stage1 && result.stage1 != *cal.expected_stage1) penalty += 500;
  const bool thread_mode = device.topology.selection_mode == SelectionMode::thread_count;
  const int tree = static_cast<int>(result.candidates.size());
  if (!thread_mode && (tree < 4 || tree > 9)) penalty += 300;

  double fastest = 0.0;
  for (const auto& s : enumerate_selections(device.topology)) fastest = std::max(fastest, true_speed(device, s));
  if (fastest / result.stage1_speed > 1.05) penalty += 300;

  // Margins around the two speed thresholds.
  for (const auto& step : result.stage1_steps) {
    if (step.selection == result.stage1_steps.front().selection) continue;
    const double slack = std::abs(step.speedup - config.stage1_min_speedup);
    if (slack < 0.004) penalty += (0.004 - slack) * 1000;
  }
  for (const auto& c : result.candidates) {
    const double ratio = true_speed(device, c.selection) / result.stage1_speed;
    const double slack = std::abs(ratio - (1 - config.epsilon));
    if (slack < 0.02) penalty += (0.02 - slack) * 1000;
  }
  const double opt_ratio = true_speed(device, optimum) / fastest;
  if (opt_ratio < 1 - config.epsilon + 0.006) penalty += (1 - config.epsilon + 0.006 - opt_ratio) * 3000;

  // A bigger cluster's core delivers at least as much throughput at its max
  // frequency as a smaller cluster's core (ipc may fall with frequency in a
  // memory-bound loop, but not by more than the frequency gain).
  for (std::size_t i = 1; i < device.truth.ipc.size(); ++i) {
    const double big = device.truth.ipc[i - 1] * device.topology.clusters[i - 1].max_freq_ghz;
    const double small = device.truth.ipc[i] * device.topology.clusters[i].max_freq_ghz;
    if (small > big * 1.0001) penalty += 100 + (small / big - 1) * 100;
  }

  if (device.name == "mate40pro") {
    const double ratio = true_power(device, CoreSelection::affinity({1, 3, 0})) /
                         true_power(device, CoreSelection::affinity({0, 2, 0}));
    if (ratio < 1.25) penalty += 100 + (1.25 - ratio) * 1000;
    if (ratio > 1.55) penalty += 100 + (ratio - 1.55) * 1000;
    // Stay near the measured operating point (6.2 W, 20.6 tok/s).
    const auto tuned = CoreSelection::affinity({0, 2, 0});
    const double watts = true_power(device, tuned), speed = true_speed(device, tuned);
    if (watts < 5.0 || watts > 7.5) penalty += 100 + std::min(std::abs(watts - 5.0), std::abs(watts - 7.5)) * 20;
    if (speed < 17 || speed > 24) penalty += 100 + std::min(std::abs(speed - 17), std::abs(speed - 24)) * 5;
  }
  return penalty;
}

struct TreeMargin {
  bool optimal = false;
  double z = 0.0;
  std::string why;
};

// Noiseless stage 2 from `root`: whether it returns the optimum and the
// smallest distance, in standard errors of the relevant mean, between a
// candidate and a flipped feasibility or ranking decision.
TreeMargin tree_margin(const SimulatedDevice& device, const SearchConfig& config,
                       const HeuristicParams& params, const CoreSelection& root,
                       const CoreSelection& optimum) {
  const SimulatedDevice quiet = device.noiseless();
  SimulatedProvider provider(quiet, RngStream(1));
  const double root_speed = true_speed(device, root);
  const auto tree = grow_candidate_tree(root, device.topology, config);
  const auto result = stage2_select(provider, device.topology, config, tree, root_speed, params);

  const double sigma = device.noise_rel_sigma / std::sqrt(static_cast<double>(config.repeats));
  const double alpha = params.alpha_for(device.topology);
  const double blend_sigma = std::sqrt(2.0) * sigma * std::sqrt((1 - alpha) * (1 - alpha) + 1.0);
  const double speed_sigma = std::sqrt(2.0) * sigma;
  const double limit = 1 - config.epsilon;

  TreeMargin out;
  out.optimal = result.chosen == optimum;
  out.z = 1e9;
  const CandidateRecord* best = nullptr;
  for (const auto& c : result.candidates) {
    if (c.selection == optimum) best = &c;
  }
  if (!best) {
    out.z = -1e9;
    out.why = "optimum not in tree of " + root.to_string();
    return out;
  }
  auto note = [&](double z, const std::string& what) {
    if (z < out.z) {
      out.z = z;
      out.why = what;
    }
  };
  note((true_speed(device, optimum) / root_speed - limit) / speed_sigma, "optimum feasibility");
  for (const auto& c : result.candidates) {
    if (c.selection == optimum) continue;
    const double ratio = true_speed(device, c.selection) / root_speed;
    if (ratio < limit) note((limit - ratio) / speed_sigma, "infeasible " + c.selection.to_string());
    else note((c.objective - best->objective) / blend_sigma, "ranking " + c.selection.to_string());
  }
  return out;
}

// Worst margin over the nominal run and the runs where one stage-1 decision
// flips; a flip that still ends at the optimum adds its own margin.
double margin_score(const SimulatedDevice& device, const SearchConfig& config,
                    const HeuristicParams& params, std::string* detail = nullptr) {
  const SimulatedDevice quiet = device.noiseless();
  SimulatedProvider provider(quiet, RngStream(1));
  const auto stage1 = stage1_fastest(provider, quiet.topology, config);
  const auto optimum = true_optimum(device, config.epsilon);
  const double speed_sigma =
      std::sqrt(2.0) * device.noise_rel_sigma / std::sqrt(static_cast<double>(config.repeats));

  const TreeMargin nominal = tree_margin(device, config, params, stage1.fastest, optimum);
  double worst = nominal.optimal ? nominal.z : -1e9;
  if (detail) *detail = nominal.why;
  for (std::size_t i = 1; i < stage1.steps.size(); ++i) {
    const auto& step = stage1.steps[i];
    const double flip = step.accepted ? step.speedup - config.stage1_min_speedup
                                      : config.stage1_min_speedup - step.speedup;
    const CoreSelection root = step.accepted ? stage1.steps[i - 1].selection : step.selection;
    const TreeMargin alt = tree_margin(device, config, params, root, optimum);
    const double z = alt.optimal ? flip / speed_sigma + std::max(0.0, alt.z) : flip / speed_sigma;
    if (z < worst) {
      worst = z;
      if (detail) *detail = "stage1 flip to " + root.to_string() + (alt.optimal ? " then " + alt.why : "");
    }
  }
  return worst;
}

void randomize(SimulatedDevice& d, RngStream& rng, double spread, const SimulatedDevice& base) {
  auto jitter = [&](double value, double lo, double hi) {
    const double v = value * std::exp(spread * (2 * rng.uniform() - 1));
    return std::clamp(v, lo, hi);
  };
  const HeuristicParams h;
  auto& t = d.truth;
  const double scale = t.kappa_prime / h.a_prime;
  const double new_scale = jitter(scale, 1e-5, 1e-2);
  auto delta = [&](double kappa, double a) {
    double dl = kappa / (a * scale) - 1 + spread * 0.4 * (2 * rng.uniform() - 1);
    return a * new_scale * (1 + std::clamp(dl, -0.2, 0.2));
  };
  t.kappa_prime = delta(t.kappa_prime, h.a_prime);
  t.kappa_performance = delta(t.kappa_performance, h.a_performance);
  t.kappa_efficient = delta(t.kappa_efficient, h.a_efficient);
  t.static_power_w = jitter(t.static_power_w, 0.3, 6.0);
  t.idle_factor = std::clamp(t.idle_factor + spread * 0.5 * (2 * rng.uniform() - 1), 0.1, 1.0);
  t.mem_ceiling_tps = jitter(t.mem_ceiling_tps, 10.0, 60.0);
  for (std::size_t i = 0; i < t.ipc.size(); ++i) {
    const bool eff = d.topology.clusters[i].core_type == CoreType::efficient;
    t.ipc[i] = jitter(t.ipc[i], eff ? 0.02 : 0.2, eff ? 1.5 : 8.0);
  }
  (void)base;
}

// Maximizes the blended margin; with raw_hi > 0 the margin without the
// heuristic is also pulled into [raw_lo, raw_hi].
int run_margin_search(const SimulatedDevice& start, int iterations, std::uint64_t seed,
                      double raw_lo, double raw_hi) {
  const SearchConfig config;
  const HeuristicParams params;
  HeuristicParams without = params;
  without.alpha = 0.0;
  without.thread_alpha = 0.0;
  RngStream rng(seed, 77);
  auto score = [&](const SimulatedDevice& d) {
    const double hard = structural_penalty(d, config, params);
    if (hard >= 100) return -hard;
    double z = margin_score(d, config, params);
    if (raw_hi > 0) {
      z = std::min(z, 2.6);
      const double raw = margin_score(d, config, without);
      if (raw < raw_lo) z -= 3 * (raw_lo - raw);
      if (raw > raw_hi) z -= 3 * (raw - raw_hi);
    }
    return z;
  };
  SimulatedDevice best = start;
  double best_score = score(start);
  for (int it = 0; it < iterations; ++it) {
    SimulatedDevice candidate = best;
    randomize(candidate, rng, best_score <= -100 ? 0.5 : 0.1, start);
    const double s = score(candidate);
    if (s > best_score) {
      best = candidate;
      best_score = s;
      std::string why;
      const double z = margin_score(best, config, params, &why);
      const double raw = margin_score(best, config, without);
      std::fprintf(stderr, "it %d score %.3f blend %.3f (%s) raw %.3f\n", it, best_score, z,
                   why.c_str(), raw);
    }
  }
  std::cout << device_to_json(best).dump(2) << "\n";
  return 0;
}

int run_search(const SimulatedDevice& start, int iterations, int trials, double lo, double hi,
               std::uint64_t seed) {
  const SearchConfig config;
  const HeuristicParams params;
  HeuristicParams without = params;
  without.alpha = 0.0;
  without.thread_alpha = 0.0;
  RngStream rng(seed, 99);

  auto evaluate = [&](const SimulatedDevice& d) {
    Fit fit;
    fit.device = d;
    fit.penalty = structural_penalty(d, config, params);
    if (fit.penalty >= 100) return fit;
    fit.with_rate = optimality_rate(d, config, params, trials, seed).rate;
    fit.without_rate = optimality_rate(d, config, without, trials, seed).rate;
    if (fit.with_rate < 0.99) fit.penalty += (0.99 - fit.with_rate) * 200;
    if (fit.without_rate < lo) fit.penalty += (lo - fit.without_rate) * 100;
    if (fit.without_rate > hi) fit.penalty += (fit.without_rate - hi) * 100;
    return fit;
  };

  Fit best = evaluate(start);
  for (int it = 0; it < iterations; ++it) {
    SimulatedDevice candidate = best.device;
    const double spread = best.penalty >= 100 ? 0.5 : 0.15;
    randomize(candidate, rng, spread, start);
    Fit fit = evaluate(candidate);
    if (fit.penalty < best.penalty) {
      best = fit;
      std::fprintf(stderr, "it %d penalty %.3f with %.3f without %.3f\n", it, best.penalty,
                   best.with_rate, best.without_rate);
    }
  }
  std::cout << device_to_json(best.device).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: calibrate <device.json> [--trials N] [--seed S]\n");
    return 1;
  }
  int trials = 0;
  int iterations = 0;
  int margin_iterations = 0;
  double raw_lo = 0.0, raw_hi = 0.0;
  double lo = 0.0, hi = 1.0;
  std::uint64_t seed = 1;
  for (int i = 2; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--trials") trials = std::stoi(argv[i + 1]);
    if (flag == "--seed") seed = std::stoull(argv[i + 1]);
    if (flag == "--search") iterations = std::stoi(argv[i + 1]);
    if (flag == "--margins") margin_iterations = std::stoi(argv[i + 1]);
    if (flag == "--raw-min") raw_lo = std::stod(argv[i + 1]);
    if (flag == "--raw-max") raw_hi = std::stod(argv[i + 1]);
    if (flag == "--without-min") lo = std::stod(argv[i + 1]);
    if (flag == "--without-max") hi = std::stod(argv[i + 1]);
  }
  if (margin_iterations > 0) {
    return run_margin_search(load_device_file(argv[1]), margin_iterations, seed, raw_lo, raw_hi);
  }
  if (iterations > 0) {
    return run_search(load_device_file(argv[1]), iterations, trials > 0 ? trials : 100, lo, hi, seed);
  }

  try {
    const SimulatedDevice device = load_device_file(argv[1]);
    const SimulatedDevice quiet = device.noiseless();
    const SearchConfig config;
    const HeuristicParams params;

    SimulatedProvider provider(quiet, RngStream(seed));
    const auto result = aecs_search(provider, quiet.topology, config, params);
    const auto optimum = true_optimum(device, config.epsilon);

    std::printf("%s\n", device.name.c_str());
    std::printf("stage 1:");
    for (const auto& step : result.stage1_steps) {
      std::printf(" %s[%.2f %+.2f%%%s]", step.selection.to_string().c_str(), step.mean.speed,
                  100 * step.speedup, step.accepted ? "" : " stop");
    }
    std::printf("\n");

    double fastest = 0.0;
    CoreSelection fastest_sel;
    for (const auto& s : enumerate_selections(device.topology)) {
      if (true_speed(device, s) > fastest) {
        fastest = true_speed(device, s);
        fastest_sel = s;
      }
    }
    std::printf("max speed %.3f at %s; max/stage1 = %.4f\n", fastest, fastest_sel.to_string().c_str(),
                fastest / result.stage1_speed);
    std::printf("true optimum %s, aecs %s, tree %zu\n", optimum.to_string().c_str(),
                result.chosen.to_string().c_str(), result.candidates.size());

    const double e_opt = true_energy_per_token(device, optimum);
    const double ht_opt = power_heuristic(optimum, device.topology, params) / true_speed(device, optimum);
    std::printf("%-14s %4s %3s %8s %8s %8s %8s %8s %8s\n", "candidate", "tag", "ok", "speed", "s/s1",
                "s/max", "P[W]", "E/Eopt", "ht/opt");
    for (const auto& c : result.candidates) {
      const double sp = true_speed(device, c.selection);
      const double ht = power_heuristic(c.selection, device.topology, params) / sp;
      std::printf("%-14s %4s %3s %8.3f %8.4f %8.4f %8.3f %8.4f %8.4f\n", c.selection.to_string().c_str(),
                  std::string(to_string(c.tag)).c_str(), c.feasible ? "y" : "n", sp,
                  sp / result.stage1_speed, sp / fastest, true_power(device, c.selection),
                  true_energy_per_token(device, c.selection) / e_opt, ht / ht_opt);
    }

    std::string why;
    const double z = margin_score(device, config, params, &why);
    HeuristicParams raw_params = params;
    raw_params.alpha = 0.0;
    raw_params.thread_alpha = 0.0;
    std::printf("margin %.2f standard errors (%s); without heuristic %.2f\n", z, why.c_str(),
                margin_score(device, config, raw_params));
    std::printf("closest feasible off-tree competitors (E/Eopt):");
    int shown = 0;
    std::vector<std::pair<double, CoreSelection>> others;
    for (const auto& s : enumerate_selections(device.topology)) {
      if (s == optimum || true_speed(device, s) < fastest * (1 - config.epsilon)) continue;
      others.push_back({true_energy_per_token(device, s) / e_opt, s});
    }
    std::sort(others.begin(), others.end());
    for (const auto& [ratio, s] : others) {
      if (shown++ == 4) break;
      std::printf(" %s=%.4f", s.to_string().c_str(), ratio);
    }
    std::printf("\n");

    if (trials > 0) {
      HeuristicParams without = params;
      without.alpha = 0.0;
      without.thread_alpha = 0.0;
      const auto with_rate = optimality_rate(device, config, params, trials, seed);
      const auto without_rate = optimality_rate(device, config, without, trials, seed);
      std::printf("rate with heuristic %.3f, without %.3f (%d trials)\n", with_rate.rate,
                  without_rate.rate, trials);
      for (const HeuristicParams* p : std::array<const HeuristicParams*, 2>{&params, &without}) {
        std::map<std::string, int> outcomes;
        for (int t = 0; t < trials; ++t) {
          SimulatedProvider noisy(device, RngStream(seed + 7, static_cast<std::uint64_t>(t)));
          const auto r = aecs_search(noisy, device.topology, config, *p);
          if (r.chosen != optimum) ++outcomes[r.stage1.to_string() + "->" + r.chosen.to_string()];
          else ++outcomes[r.stage1.to_string() + "->ok"];
        }
        std::printf("  alpha %.1f:", p->alpha);
        for (const auto& [k, v] : outcomes) std::printf(" %s:%d", k.c_str(), v);
        std::printf("\n");
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
