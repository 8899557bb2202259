// Command-line front end over the bncbf C API.
#include "bncbf/bncbf.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

constexpr int kExitClean = 0;
constexpr int kExitUnsafe = 1;
constexpr int kExitError = 2;

struct Overrides {
  std::optional<double> dt, duration, eps1, eps2, alpha_slope;
  std::optional<long long> seed;
  bool filter_bypass = false;
  bool broad_phase = false;
};

struct ScenarioHandle {
  bncbf_scenario* ptr = nullptr;
  ~ScenarioHandle() { bncbf_scenario_free(ptr); }
};

struct RunHandle {
  bncbf_run* ptr = nullptr;
  ~RunHandle() { bncbf_run_free(ptr); }
};

std::string take(char* s) {
  std::string out = s != nullptr ? s : "";
  bncbf_string_free(s);
  return out;
}

int report(bncbf_status st, const char* what) {
  std::cerr << "error: " << what << ": " << bncbf_status_name(st) << ": " << bncbf_last_error() << '\n';
  return kExitError;
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--dt", o.dt, "control period, s")->check(CLI::PositiveNumber);
  cmd->add_option("--duration", o.duration, "simulated time, s")->check(CLI::NonNegativeNumber);
  cmd->add_option("--eps1", o.eps1, "almost-active barrier threshold")->check(CLI::NonNegativeNumber);
  cmd->add_option("--eps2", o.eps2, "almost-active multiplier threshold")->check(CLI::PositiveNumber);
  cmd->add_option("--alpha-slope", o.alpha_slope, "slope of the linear class-K function")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "seed for initial-pose jitter")->check(CLI::NonNegativeNumber);
  cmd->add_flag("--filter-bypass", o.filter_bypass, "apply the nominal input unfiltered");
  cmd->add_flag("--broad-phase", o.broad_phase, "skip distance solves proven far from active");
}

bncbf_status apply(bncbf_scenario* s, const Overrides& o) {
  bncbf_status st = BNCBF_OK;
  auto set = [&](const char* key, double v) {
    if (st == BNCBF_OK) st = bncbf_scenario_set(s, key, v);
  };
  if (o.dt) set("dt", *o.dt);
  if (o.duration) set("duration", *o.duration);
  if (o.eps1) set("eps1", *o.eps1);
  if (o.eps2) set("eps2", *o.eps2);
  if (o.alpha_slope) set("alpha_slope", *o.alpha_slope);
  if (o.seed) set("seed", static_cast<double>(*o.seed));
  if (o.filter_bypass) set("filter_bypass", 1.0);
  if (o.broad_phase) set("broad_phase", 1.0);
  return st;
}

int load(const std::string& path, const Overrides* o, ScenarioHandle& h) {
  bncbf_status st = bncbf_scenario_load(path.c_str(), &h.ptr);
  if (st != BNCBF_OK) return report(st, "loading scenario");
  if (o != nullptr && (st = apply(h.ptr, *o)) != BNCBF_OK) return report(st, "applying overrides");
  return kExitClean;
}

int cmd_validate(const std::string& path) {
  ScenarioHandle sc;
  if (int rc = load(path, nullptr, sc)) return rc;
  int ok = 0;
  char* rep = nullptr;
  const bncbf_status st = bncbf_validate(sc.ptr, &ok, &rep);
  if (st != BNCBF_OK) return report(st, "validating");
  const json j = json::parse(take(rep));
  if (ok) {
    std::cout << "PASS " << path << "  h_g(0) = " << j.value("h_g", 0.0) << "  leaves = " << j.value("leaves", 0)
              << " (collision " << j.value("collision_leaves", 0) << ", los " << j.value("los_leaves", 0) << ")\n";
    return kExitClean;
  }
  std::cout << "FAIL " << path << '\n';
  for (const auto& p : j.at("problems")) std::cout << "  " << p.get<std::string>() << '\n';
  return kExitUnsafe;
}

int summarize(bncbf_run* run, json& summary) {
  char* text = nullptr;
  const bncbf_status st = bncbf_run_summary(run, &text);
  if (st != BNCBF_OK) return report(st, "summarizing");
  summary = json::parse(take(text));
  return kExitClean;
}

void print_stats(const json& summary) {
  const json& s = summary.at("stats");
  std::printf("steps %ld  min h_g %s  violations %d  faults %d%s\n", s.at("steps").get<long>(),
              s.at("min_h_g").is_null() ? "nan" : std::to_string(s.at("min_h_g").get<double>()).c_str(),
              s.at("violations").get<int>(), s.at("faults").get<int>(), s.at("aborted").get<bool>() ? "  ABORTED" : "");
  std::printf("collision leaves %d  los leaves %d  distance QPs/step %.1f +- %.1f\n",
              s.at("collision_leaves").get<int>(), s.at("los_leaves").get<int>(), s.at("distance_qps_mean").get<double>(),
              s.at("distance_qps_std").get<double>());
  std::printf("active leaves %.2f +- %.2f  max goal error %.4f m  max filter deviation %.4f\n",
              s.at("active_mean").get<double>(), s.at("active_std").get<double>(), s.at("max_goal_error").get<double>(),
              s.at("max_filter_deviation").get<double>());
  std::printf("time/step ms: distance %.3f +- %.3f  filter %.3f +- %.3f  total %.3f +- %.3f\n",
              s.at("distance_ms_mean").get<double>(), s.at("distance_ms_std").get<double>(),
              s.at("filter_ms_mean").get<double>(), s.at("filter_ms_std").get<double>(),
              s.at("total_ms_mean").get<double>(), s.at("total_ms_std").get<double>());
}

int exit_for(bncbf_run* run) {
  int violations = 0, faults = 0, aborted = 0;
  const bncbf_status st = bncbf_run_counts(run, &violations, &faults, &aborted);
  if (st != BNCBF_OK) return report(st, "counting events");
  return violations == 0 && faults == 0 && aborted == 0 ? kExitClean : kExitUnsafe;
}

int run_one(bncbf_scenario* sc, const std::string& out, json& summary, int& rc_unsafe) {
  int ok = 0;
  char* rep = nullptr;
  bncbf_status st = bncbf_validate(sc, &ok, &rep);
  if (st != BNCBF_OK) return report(st, "validating");
  const json j = json::parse(take(rep));
  if (!ok) {
    std::cerr << "scenario failed validation:\n";
    for (const auto& p : j.at("problems")) std::cerr << "  " << p.get<std::string>() << '\n';
    return kExitUnsafe;
  }
  RunHandle run;
  if ((st = bncbf_run_scenario(sc, 0, &run.ptr)) != BNCBF_OK) return report(st, "running");
  if ((st = bncbf_run_write(run.ptr, out.c_str())) != BNCBF_OK) return report(st, "writing logs");
  if (int rc = summarize(run.ptr, summary)) return rc;
  rc_unsafe = exit_for(run.ptr);
  return kExitClean;
}

int cmd_run(const std::string& path, const std::string& out, const Overrides& o) {
  ScenarioHandle sc;
  if (int rc = load(path, &o, sc)) return rc;
  json summary;
  int unsafe = kExitClean;
  if (int rc = run_one(sc.ptr, out, summary, unsafe)) return rc;
  print_stats(summary);
  std::cout << "logs written to " << out << '\n';
  return unsafe;
}

int cmd_stats(const std::string& dir) {
  RunHandle run;
  const bncbf_status st = bncbf_run_read(dir.c_str(), &run.ptr);
  if (st != BNCBF_OK) return report(st, "reading logs");
  json summary;
  if (int rc = summarize(run.ptr, summary)) return rc;
  print_stats(summary);
  return exit_for(run.ptr);
}

int cmd_sweep(const std::string& path, const std::string& out, const Overrides& o, const std::vector<int>& counts) {
  ScenarioHandle base;
  if (int rc = load(path, &o, base)) return rc;
  json rows = json::array();
  int worst = kExitClean;
  for (int n : counts) {
    ScenarioHandle variant;
    const bncbf_status st = bncbf_scenario_with_followers(base.ptr, n, &variant.ptr);
    if (st != BNCBF_OK) return report(st, "building sweep variant");
    json summary;
    int unsafe = kExitClean;
    const std::string dir = (std::filesystem::path(out) / ("nf" + std::to_string(n))).string();
    if (int rc = run_one(variant.ptr, dir, summary, unsafe)) return rc;
    worst = std::max(worst, unsafe);
    json row = summary.at("stats");
    row["n_f"] = n;
    rows.push_back(row);
  }

  std::filesystem::create_directories(out);
  {
    std::ofstream js(std::filesystem::path(out) / "sweep.json");
    js << rows.dump(2) << '\n';
  }
  const std::vector<std::string> cols{"n_f",           "collision_leaves", "los_leaves",     "active_mean",
                                      "active_std",    "collision_qps_mean", "distance_qps_mean", "distance_ms_mean",
                                      "distance_ms_std", "filter_ms_mean", "filter_ms_std",  "total_ms_mean",
                                      "total_ms_std",  "min_h_g",          "violations",     "faults"};
  std::ofstream csv(std::filesystem::path(out) / "sweep.csv");
  for (std::size_t c = 0; c < cols.size(); ++c) csv << (c ? "," : "") << cols[c];
  csv << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < cols.size(); ++c) csv << (c ? "," : "") << r.at(cols[c]).dump();
    csv << '\n';
  }

  std::printf("%4s %10s %10s %14s %14s %16s %16s %16s\n", "N_F", "CA leaves", "LOS leaves", "active", "QPs/step",
              "distance ms", "filter ms", "total ms");
  for (const auto& r : rows) {
    std::printf("%4d %10d %10d %7.2f+-%-5.2f %14.1f %8.3f+-%-6.3f %8.3f+-%-6.3f %8.3f+-%-6.3f\n",
                r.at("n_f").get<int>(), r.at("collision_leaves").get<int>(), r.at("los_leaves").get<int>(),
                r.at("active_mean").get<double>(), r.at("active_std").get<double>(),
                r.at("distance_qps_mean").get<double>(), r.at("distance_ms_mean").get<double>(),
                r.at("distance_ms_std").get<double>(), r.at("filter_ms_mean").get<double>(),
                r.at("filter_ms_std").get<double>(), r.at("total_ms_mean").get<double>(),
                r.at("total_ms_std").get<double>());
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boolean nonsmooth barrier-function safety filter simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(bncbf_version()));

  std::string scenario, out;
  Overrides o;
  std::vector<int> counts{2, 5, 7, 9};

  auto* validate = app.add_subcommand("validate", "check a scenario without running it");
  validate->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "simulate and write traj.csv, barriers.csv, events.json, summary.json");
  run->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();
  add_overrides(run, o);

  auto* st = app.add_subcommand("stats", "summarize a run directory");
  st->add_option("--out", out, "directory written by run")->required()->check(CLI::ExistingDirectory);

  auto* sweep = app.add_subcommand("sweep", "rerun with several follower counts");
  sweep->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "output directory")->required();
  sweep->add_option("--counts", counts, "follower counts")->delimiter(',');
  add_overrides(sweep, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitClean : kExitError;
  }

  try {
    if (*validate) return cmd_validate(scenario);
    if (*run) return cmd_run(scenario, out, o);
    if (*st) return cmd_stats(out);
    if (*sweep) return cmd_sweep(scenario, out, o, counts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
