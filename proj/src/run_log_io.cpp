#include "run_log_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bncbf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double num_or_nan(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

json vec_json(const Vec5& v) {
  json a = json::array();
  for (int k = 0; k < 5; ++k) a.push_back(num(v(k)));
  return a;
}

Vec5 vec_from(const json& j) {
  Vec5 v;
  for (int k = 0; k < 5; ++k) v(k) = num_or_nan(j.at(static_cast<std::size_t>(k)));
  return v;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read '" + p.string() + "'");
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw IoError("bad number '" + s + "'");
  return v;
}

long to_long(const std::string& s) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw IoError("bad integer '" + s + "'");
  return v;
}

const char* kTrajHeader = "step,time,agent,x,y,z,theta,psi,nom_u,nom_v,nom_w,nom_q,nom_r,u,v,w,q,r";
const char* kBarrierFixed =
    "step,time,h_g,active_smooth,active_nonsmooth,active_total,collision_qps,los_qps,pruned,"
    "distance_ms,filter_ms,total_ms,filter_status,filter_iterations,decrease_ok";
constexpr std::size_t kBarrierFixedCols = 15;

}  // namespace

json summary_json(const RunLog& log) {
  json agents = json::array();
  for (std::size_t a = 0; a < log.agent_ids.size(); ++a) {
    agents.push_back({{"id", log.agent_ids[a]}, {"role", log.roles.at(a)}, {"goal", vec_json(log.goals.at(a))}});
  }
  json final_states = json::array();
  for (const auto& s : log.final_states) final_states.push_back(vec_json(s));
  return json{
      {"scenario", log.scenario},
      {"config",
       {{"dt", log.config.dt},
        {"duration", log.config.duration},
        {"eps1", log.config.eps1},
        {"eps2", log.config.eps2},
        {"alpha_slope", log.config.alpha_slope},
        {"seed", log.config.seed},
        {"filter_bypass", log.config.filter_bypass},
        {"broad_phase", log.config.broad_phase}}},
      {"agents", agents},
      {"leaves", log.leaf_ids},
      {"collision_leaves", log.collision_leaves},
      {"los_leaves", log.los_leaves},
      {"aborted", log.aborted},
      {"final", {{"time", log.final_time}, {"h_g", num(log.final_h_g)}, {"states", final_states}}},
      {"stats", to_json(stats(log))},
  };
}

void write_run(const RunLog& log, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
  const fs::path root(dir);

  {
    std::ofstream out = open_out(root / "traj.csv");
    out << kTrajHeader << '\n';
    for (const auto& r : log.steps) {
      for (std::size_t a = 0; a < r.states.size(); ++a) {
        out << r.step << ',' << fmt(r.time) << ',' << log.agent_ids.at(a);
        for (const Vec5* v : {&r.states[a], &r.nominal[a], &r.safe[a]}) {
          for (int c = 0; c < 5; ++c) out << ',' << fmt((*v)(c));
        }
        out << '\n';
      }
    }
  }
  {
    std::ofstream out = open_out(root / "barriers.csv");
    out << kBarrierFixed;
    for (const auto& id : log.leaf_ids) out << ',' << id;
    out << '\n';
    for (const auto& r : log.steps) {
      out << r.step << ',' << fmt(r.time) << ',' << fmt(r.h_g) << ',' << r.active_smooth << ','
          << r.active_nonsmooth << ',' << (r.active_smooth + r.active_nonsmooth) << ',' << r.collision_qps << ','
          << r.los_qps << ',' << r.pruned << ',' << fmt(r.distance_ms) << ',' << fmt(r.filter_ms) << ','
          << fmt(r.total_ms) << ',' << r.filter_status << ',' << r.filter_iterations << ','
          << (r.decrease_ok ? 1 : 0);
      for (double v : r.leaf_values) out << ',' << fmt(v);
      out << '\n';
    }
  }
  {
    json events = json::array();
    for (const auto& e : log.events) {
      events.push_back(
          {{"step", e.step}, {"time", e.time}, {"type", e.type}, {"h_g", num(e.h_g)}, {"detail", e.detail}});
    }
    std::ofstream out = open_out(root / "events.json");
    out << events.dump(2) << '\n';
  }
  {
    std::ofstream out = open_out(root / "summary.json");
    out << summary_json(log).dump(2) << '\n';
  }
}

RunLog read_run(const std::string& dir) {
  const fs::path root(dir);
  RunLog log;
  try {
    json summary;
    {
      std::ifstream in = open_in(root / "summary.json");
      summary = json::parse(in);
    }
    log.scenario = summary.at("scenario").get<std::string>();
    const json& c = summary.at("config");
    log.config = {c.at("dt").get<double>(),         c.at("duration").get<double>(),
                  c.at("eps1").get<double>(),       c.at("eps2").get<double>(),
                  c.at("alpha_slope").get<double>(), c.at("seed").get<std::uint64_t>(),
                  c.at("filter_bypass").get<bool>(), c.at("broad_phase").get<bool>()};
    for (const auto& a : summary.at("agents")) {
      log.agent_ids.push_back(a.at("id").get<int>());
      log.roles.push_back(a.at("role").get<std::string>());
      log.goals.push_back(vec_from(a.at("goal")));
    }
    log.leaf_ids = summary.at("leaves").get<std::vector<std::string>>();
    log.collision_leaves = summary.at("collision_leaves").get<int>();
    log.los_leaves = summary.at("los_leaves").get<int>();
    log.aborted = summary.at("aborted").get<bool>();
    const json& fin = summary.at("final");
    log.final_time = fin.at("time").get<double>();
    log.final_h_g = num_or_nan(fin.at("h_g"));
    for (const auto& s : fin.at("states")) log.final_states.push_back(vec_from(s));

    json events;
    {
      std::ifstream in = open_in(root / "events.json");
      events = json::parse(in);
    }
    for (const auto& e : events) {
      log.events.push_back({e.at("step").get<long>(), e.at("time").get<double>(), e.at("type").get<std::string>(),
                            num_or_nan(e.at("h_g")), e.at("detail").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed run summary or events: ") + e.what());
  }

  const std::size_t n_agents = log.agent_ids.size();
  {
    std::ifstream in = open_in(root / "barriers.csv");
    std::string line;
    std::getline(in, line);
    const auto header = split_csv(line);
    if (header.size() != kBarrierFixedCols + log.leaf_ids.size()) throw IoError("barriers.csv header mismatch");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != header.size()) throw IoError("barriers.csv row has the wrong width");
      StepRecord r;
      r.step = to_long(f[0]);
      r.time = to_double(f[1]);
      r.h_g = to_double(f[2]);
      r.active_smooth = static_cast<int>(to_long(f[3]));
      r.active_nonsmooth = static_cast<int>(to_long(f[4]));
      r.collision_qps = static_cast<int>(to_long(f[6]));
      r.los_qps = static_cast<int>(to_long(f[7]));
      r.pruned = static_cast<int>(to_long(f[8]));
      r.distance_ms = to_double(f[9]);
      r.filter_ms = to_double(f[10]);
      r.total_ms = to_double(f[11]);
      r.filter_status = f[12];
      r.filter_iterations = static_cast<int>(to_long(f[13]));
      r.decrease_ok = to_long(f[14]) != 0;
      for (std::size_t k = kBarrierFixedCols; k < f.size(); ++k) r.leaf_values.push_back(to_double(f[k]));
      r.states.assign(n_agents, Vec5::Zero());
      r.nominal.assign(n_agents, Vec5::Zero());
      r.safe.assign(n_agents, Vec5::Zero());
      log.steps.push_back(std::move(r));
    }
  }
  {
    std::ifstream in = open_in(root / "traj.csv");
    std::string line;
    std::getline(in, line);
    if (line != kTrajHeader) throw IoError("traj.csv header mismatch");
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != 18) throw IoError("traj.csv row has the wrong width");
      const std::size_t step = row / std::max<std::size_t>(n_agents, 1);
      const std::size_t agent = row % std::max<std::size_t>(n_agents, 1);
      ++row;
      if (step >= log.steps.size() || to_long(f[0]) != log.steps[step].step ||
          to_long(f[2]) != log.agent_ids.at(agent)) {
        throw IoError("traj.csv rows do not line up with barriers.csv");
      }
      StepRecord& r = log.steps[step];
      for (int c = 0; c < 5; ++c) {
        r.states[agent](c) = to_double(f[3 + static_cast<std::size_t>(c)]);
        r.nominal[agent](c) = to_double(f[8 + static_cast<std::size_t>(c)]);
        r.safe[agent](c) = to_double(f[13 + static_cast<std::size_t>(c)]);
      }
    }
    if (row != log.steps.size() * n_agents) throw IoError("traj.csv has the wrong number of rows");
  }
  return log;
}

}  // namespace bncbf
