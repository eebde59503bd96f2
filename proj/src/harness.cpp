#include "icl/harness.hpp"

#include "icl/locgeom.hpp"
#include "icl/scenario_io.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#ifndef ICL_BUILD_ID
#define ICL_BUILD_ID "unknown"
#endif

namespace icl
{

using nlohmann::json;

namespace
{

const std::map<std::string, ExperimentKind> &kind_table()
{
  static const std::map<std::string, ExperimentKind> t{
      {"solve", ExperimentKind::Solve},           {"baseline", ExperimentKind::Baseline},
      {"sweep_pmax", ExperimentKind::SweepPmax},  {"sweep_zeta", ExperimentKind::SweepZeta},
      {"sweep_users", ExperimentKind::SweepUsers}, {"crlb_grid", ExperimentKind::CrlbGrid},
      {"region", ExperimentKind::Region}};
  return t;
}

template <class F>
void parallel_for(std::size_t n, int threads, F &&f)
{
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++)
      f(i);
  };
  const int t = std::clamp(threads, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  if (t == 1)
  {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (int i = 0; i < t; ++i)
    pool.emplace_back(worker);
}

json matrix_json(const TxUserMatrix &m)
{
  json rows = json::array();
  for (Eigen::Index j = 0; j < m.rows(); ++j)
  {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k)
      r.push_back(m(j, k));
    rows.push_back(r);
  }
  return rows;
}

TxUserMatrix matrix_from(const json &rows, Eigen::Index cols)
{
  if (!rows.is_array() || rows.size() != kNumTx)
    throw Error("solution: expected 4 transmitter rows");
  TxUserMatrix m(kNumTx, cols);
  for (Eigen::Index j = 0; j < kNumTx; ++j)
  {
    const json &r = rows[static_cast<std::size_t>(j)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols)
      throw Error("solution: row length does not match the user count");
    for (Eigen::Index k = 0; k < cols; ++k)
      m(j, k) = r[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

std::ofstream open_out(const std::filesystem::path &p)
{
  std::ofstream out(p);
  if (!out)
    throw Error("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

void write_json(const std::filesystem::path &p, const json &doc)
{
  auto out = open_out(p);
  out << doc.dump(2) << '\n';
}

std::string fmt(double v)
{
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

RunRecord finish_record(RunRecord r)
{
  const SolverDiagnostics &d = r.solution.diagnostics;
  r.wall_time_s = d.wall_time_s;
  r.cpu_time_s = d.cpu_time_s;
  r.inner_solver_calls = d.inner_solver_calls;
  r.candidate_evaluations = d.candidate_evaluations;
  r.build_id = build_id();
  return r;
}

void write_timing(const std::filesystem::path &dir, const std::vector<RunRecord> &records)
{
  json runs = json::array();
  for (const auto &r : records)
  {
    json j{{"kind", r.kind},
           {"method", r.method},
           {"point", r.point},
           {"repetition", r.repetition},
           {"seed", r.seed},
           {"wall_time_s", r.wall_time_s},
           {"cpu_time_s", r.cpu_time_s},
           {"inner_solver_calls", r.inner_solver_calls},
           {"candidate_evaluations", r.candidate_evaluations},
           {"fitness_evaluations", r.solution.diagnostics.fitness_evaluations},
           {"outer_iterations", r.solution.diagnostics.outer_iterations}};
    if (r.match_time_s >= 0.0)
      j["pso_time_to_match_s"] = r.match_time_s;
    runs.push_back(j);
  }
  write_json(dir / "timing.json", json{{"build_id", build_id()}, {"runs", runs}});
}

void write_sweep(const std::filesystem::path &dir, const std::string &name, const std::string &param,
                 const std::vector<RunRecord> &records)
{
  auto csv = open_out(dir / ("sweep_" + name + ".csv"));
  csv << param
      << ",method,repetition,seed,feasible,sum_rate_bps,min_user_rate_bps,uav_x_m,uav_y_m,uav_h_m,p1_w,p2_w,p3_w,"
         "outer_iterations,candidate_evaluations,fitness_evaluations,max_candidates_per_iteration\n";
  json all = json::array();
  for (const auto &r : records)
  {
    const Solution &s = r.solution;
    const auto &d = s.diagnostics;
    const int max_c = d.candidates_per_iteration.empty()
                          ? 0
                          : *std::max_element(d.candidates_per_iteration.begin(), d.candidates_per_iteration.end());
    const bool f = s.feasible;
    csv << fmt(r.param) << ',' << r.method << ',' << r.repetition << ',' << r.seed << ',' << (f ? 1 : 0) << ','
        << (f ? fmt(s.objective) : "") << ',' << (f ? fmt(s.rates.user_rates.minCoeff()) : "") << ','
        << (f ? fmt(s.u.x) : "") << ',' << (f ? fmt(s.u.y) : "") << ',' << (f ? fmt(s.u.h) : "") << ','
        << (f ? fmt(s.alloc.pos_power(0)) : "") << ',' << (f ? fmt(s.alloc.pos_power(1)) : "") << ','
        << (f ? fmt(s.alloc.pos_power(2)) : "") << ',' << d.outer_iterations << ',' << d.candidate_evaluations
        << ',' << d.fitness_evaluations << ',' << max_c << '\n';
    all.push_back(json{{"point", r.point}, {"method", r.method}, {"repetition", r.repetition}, {"solution",
                                                                                              solution_to_json(s)}});
  }
  write_json(dir / ("sweep_" + name + ".json"), all);
}

struct Task
{
  ScenarioConfig cfg;
  std::string method;
  std::string point;
  double param = 0.0;
  int repetition = 0;
  unsigned long long seed = 0;
};

std::vector<RunRecord> run_tasks(const std::vector<Task> &tasks, const ExperimentSpec &spec, const std::string &kind)
{
  ExperimentSpec inner = spec;
  inner.threads = 1; // parallelism lives at the task level
  std::vector<RunRecord> out(tasks.size());
  parallel_for(tasks.size(), spec.threads, [&](std::size_t i) {
    const Task &t = tasks[i];
    RunRecord r = run_method(t.method, t.cfg, inner, t.seed);
    r.kind = kind;
    r.point = t.point;
    r.param = t.param;
    r.repetition = t.repetition;
    out[i] = std::move(r);
  });
  return out;
}

std::vector<Task> sweep_tasks(const ScenarioConfig &base, const ExperimentSpec &spec, const std::string &key,
                              const std::vector<double> &values)
{
  std::vector<Task> tasks;
  for (double v : values)
    for (int rep = 0; rep < spec.repetitions; ++rep)
      for (const auto &m : spec.methods)
      {
        Task t;
        t.cfg = apply_overrides(base, {{key, fmt(v)}});
        t.method = m;
        t.point = key + "=" + fmt(v);
        t.param = v;
        t.repetition = rep;
        t.seed = spec.seed + static_cast<unsigned long long>(rep);
        tasks.push_back(std::move(t));
      }
  return tasks;
}

void write_grid(const std::filesystem::path &dir, const GridMap &map)
{
  const std::string tag = map.scheme == FourthAnchor::Uav ? "uav" : "ground";
  auto h = open_out(dir / ("crlb_" + tag + "_horizontal.csv"));
  auto v = open_out(dir / ("crlb_" + tag + "_vertical.csv"));
  for (auto *out : {&h, &v})
    *out << "x,y,err_m,best_anchor_x,best_anchor_y\n";
  for (const auto &c : map.cells)
  {
    const std::string tail = "," + fmt(c.anchor_x) + "," + fmt(c.anchor_y) + "\n";
    const std::string head = fmt(c.x) + "," + fmt(c.y) + ",";
    h << head << (c.singular ? "" : fmt(c.err_h)) << tail;
    v << head << (c.singular ? "" : fmt(c.err_v)) << tail;
  }
}

} // namespace

void ExperimentSpec::validate() const
{
  if (repetitions < 1)
    throw Error("spec: repetitions must be >= 1");
  if (threads < 1)
    throw Error("spec: threads must be >= 1");
  if (!scenario_path.empty() && !std::filesystem::exists(scenario_path))
    throw Error("spec: scenario file " + scenario_path.string() + " does not exist");
  for (const auto &m : methods)
    if (m != "proposed" && m != "pso" && m != "epa" && m != "ucd")
      throw Error("spec: unknown method " + m);
}

std::string build_id()
{
  return ICL_BUILD_ID;
}

ExperimentKind parse_kind(const std::string &name)
{
  const auto it = kind_table().find(name);
  if (it == kind_table().end())
    throw Error("unknown experiment kind " + name);
  return it->second;
}

std::string kind_name(ExperimentKind kind)
{
  for (const auto &[n, k] : kind_table())
    if (k == kind)
      return n;
  return "unknown";
}

ScenarioConfig apply_overrides(const ScenarioConfig &cfg, const std::vector<std::pair<std::string, std::string>> &kv)
{
  if (kv.empty())
    return cfg;
  json doc = scenario_to_json(cfg);
  for (const auto &[key, value] : kv)
  {
    json v;
    try
    {
      v = json::parse(value);
    }
    catch (const json::parse_error &)
    {
      v = value;
    }
    doc[key] = v;
  }
  return scenario_from_json(doc);
}

ScenarioConfig load_spec_scenario(const ExperimentSpec &spec)
{
  ScenarioConfig cfg = spec.scenario_path.empty() ? reference_scenario() : load_scenario(spec.scenario_path);
  cfg = apply_overrides(cfg, spec.overrides);
  return cfg;
}

GibbsConfig gibbs_for(const ScenarioConfig &cfg, const ExperimentSpec &spec, unsigned long long seed)
{
  GibbsConfig g = spec.gibbs;
  if (!(g.delta_p > 0.0))
    g.delta_p = cfg.p_max / 20.0;
  g.seed = seed;
  g.threads = spec.threads;
  return g;
}

RunRecord run_method(const std::string &method, const ScenarioConfig &cfg_in, const ExperimentSpec &spec,
                     unsigned long long seed, std::vector<GibbsTraceRow> *trace)
{
  ScenarioConfig cfg = cfg_in;
  cfg.seed = seed;
  RunRecord r;
  r.method = method;
  r.seed = seed;
  const GibbsConfig g = gibbs_for(cfg, spec, seed);
  if (method == "proposed")
  {
    const Stopwatch clock;
    try
    {
      GibbsResult res = run(cfg, g);
      r.solution = std::move(res.solution);
      if (trace)
        *trace = std::move(res.trace);
    }
    catch (const InfeasibleError &e)
    {
      r.solution.method = "proposed";
      r.solution.reason = e.what();
      r.solution.diagnostics.wall_time_s = clock.wall_s();
      r.solution.diagnostics.cpu_time_s = clock.cpu_s();
    }
  }
  else if (method == "pso")
  {
    PsoConfig p = spec.pso;
    p.seed = seed;
    p.threads = spec.threads;
    PsoResult res = pso_solve(cfg, p);
    r.solution = std::move(res.solution);
    r.pso_progress = std::move(res.progress);
  }
  else if (method == "epa")
    r.solution = epa_solve(cfg);
  else if (method == "ucd")
    r.solution = ucd_solve(cfg, g);
  else
    throw Error("unknown method " + method);
  return finish_record(std::move(r));
}

ScenarioConfig subsample_users(const ScenarioConfig &cfg, std::size_t m, unsigned long long seed)
{
  if (m < 2 || m > cfg.num_users())
    throw Error("subsample_users: m must lie in [2, K]");
  std::vector<std::size_t> idx(cfg.num_users());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = i;
  std::mt19937_64 rng(seed);
  // Fisher-Yates on raw draws keeps the choice identical across standard libraries.
  for (std::size_t i = idx.size() - 1; i > 0; --i)
    std::swap(idx[i], idx[rng() % (i + 1)]);
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  ScenarioConfig out = cfg;
  out.users.clear();
  std::vector<double> ov;
  for (std::size_t i : idx)
  {
    out.users.push_back(cfg.users[i]);
    if (cfg.accuracy_overrides)
      ov.push_back((*cfg.accuracy_overrides)[i]);
  }
  if (cfg.accuracy_overrides)
    out.accuracy_overrides = ov;
  out.validate();
  return out;
}

json solution_to_json(const Solution &sol)
{
  json doc{{"method", sol.method}, {"feasible", sol.feasible}, {"reason", sol.reason}};
  const auto &d = sol.diagnostics;
  doc["diagnostics"] = {{"outer_iterations", d.outer_iterations},
                        {"inner_solver_calls", d.inner_solver_calls},
                        {"candidate_evaluations", d.candidate_evaluations},
                        {"fitness_evaluations", d.fitness_evaluations},
                        {"candidates_per_iteration", d.candidates_per_iteration}};
  doc["accuracy_thresholds"] = sol.accuracy_thresholds;
  if (!sol.feasible)
    return doc;
  doc["objective_bps"] = sol.objective;
  doc["uav"] = json::array({sol.u.x, sol.u.y, sol.u.h});
  doc["pos_power_w"] = json::array();
  for (int j = 0; j < kNumTx; ++j)
    doc["pos_power_w"].push_back(sol.alloc.pos_power(j));
  doc["comm_power_w"] = matrix_json(sol.alloc.comm_power);
  doc["bandwidth"] = matrix_json(sol.alloc.bandwidth);
  doc["link_rates_bps"] = matrix_json(sol.rates.link_rates);
  doc["user_rates_bps"] = std::vector<double>(sol.rates.user_rates.data(),
                                              sol.rates.user_rates.data() + sol.rates.user_rates.size());
  doc["sum_rate_bps"] = sol.rates.sum_rate;
  return doc;
}

Solution solution_from_json(const json &doc)
{
  Solution s;
  s.method = doc.at("method").get<std::string>();
  s.feasible = doc.at("feasible").get<bool>();
  s.reason = doc.at("reason").get<std::string>();
  const json &d = doc.at("diagnostics");
  s.diagnostics.outer_iterations = d.at("outer_iterations").get<int>();
  s.diagnostics.inner_solver_calls = d.at("inner_solver_calls").get<long>();
  s.diagnostics.candidate_evaluations = d.at("candidate_evaluations").get<long>();
  s.diagnostics.fitness_evaluations = d.at("fitness_evaluations").get<long>();
  s.diagnostics.candidates_per_iteration = d.at("candidates_per_iteration").get<std::vector<int>>();
  s.accuracy_thresholds = doc.at("accuracy_thresholds").get<std::vector<double>>();
  if (!s.feasible)
    return s;
  s.objective = doc.at("objective_bps").get<double>();
  const auto u = doc.at("uav").get<std::vector<double>>();
  if (u.size() != 3)
    throw Error("solution: uav must be [x, y, h]");
  s.u = {u[0], u[1], u[2]};
  const auto rates = doc.at("user_rates_bps").get<std::vector<double>>();
  const auto K = static_cast<Eigen::Index>(rates.size());
  const auto pp = doc.at("pos_power_w").get<std::vector<double>>();
  if (pp.size() != kNumTx)
    throw Error("solution: pos_power_w needs 4 entries");
  s.alloc.pos_power = TxVector(pp[0], pp[1], pp[2], pp[3]);
  s.alloc.comm_power = matrix_from(doc.at("comm_power_w"), K);
  s.alloc.bandwidth = matrix_from(doc.at("bandwidth"), K);
  s.rates.link_rates = matrix_from(doc.at("link_rates_bps"), K);
  s.rates.user_rates = Eigen::Map<const Eigen::VectorXd>(rates.data(), K);
  s.rates.sum_rate = doc.at("sum_rate_bps").get<double>();
  return s;
}

std::vector<RunRecord> run_experiment(const ExperimentSpec &spec)
{
  spec.validate();
  const ScenarioConfig cfg = load_spec_scenario(spec);
  const std::filesystem::path &dir = spec.output_dir;
  std::filesystem::create_directories(dir);
  std::vector<RunRecord> records;
  const std::string kind = kind_name(spec.kind);

  switch (spec.kind)
  {
  case ExperimentKind::Solve:
  case ExperimentKind::Baseline: {
    const std::string method = spec.kind == ExperimentKind::Solve ? "proposed" : spec.baseline;
    for (int rep = 0; rep < spec.repetitions; ++rep)
    {
      std::vector<GibbsTraceRow> trace;
      RunRecord r = run_method(method, cfg, spec, spec.seed + static_cast<unsigned long long>(rep), &trace);
      r.kind = kind;
      r.repetition = rep;
      const std::string suffix = spec.repetitions > 1 ? "_" + std::to_string(rep) : "";
      json doc = solution_to_json(r.solution);
      doc["scenario"] = scenario_to_json(cfg);
      doc["seed"] = r.seed;
      write_json(dir / (method + suffix + ".json"), doc);
      if (spec.trace && method == "proposed")
      {
        auto out = open_out(dir / ("trace" + suffix + ".csv"));
        write_trace_csv(out, trace);
      }
      if (spec.trace && method == "pso")
      {
        auto out = open_out(dir / ("pso_trace" + suffix + ".csv"));
        out << "iteration,evaluations,best_fitness\n";
        for (const auto &p : r.pso_progress)
          out << p.iteration << ',' << p.evaluations << ',' << fmt(p.best) << '\n';
      }
      records.push_back(std::move(r));
    }
    break;
  }
  case ExperimentKind::SweepPmax:
    records = run_tasks(sweep_tasks(cfg, spec, "p_max_w", spec.pmax_list), spec, kind);
    write_sweep(dir, "pmax", "p_max_w", records);
    break;
  case ExperimentKind::SweepZeta:
    records = run_tasks(sweep_tasks(cfg, spec, "zeta", spec.zeta_list), spec, kind);
    write_sweep(dir, "zeta", "zeta", records);
    break;
  case ExperimentKind::SweepUsers: {
    std::vector<Task> tasks;
    for (std::size_t m = 2; m <= cfg.num_users(); ++m)
      for (int rep = 0; rep < spec.repetitions; ++rep)
      {
        const unsigned long long seed = spec.seed + static_cast<unsigned long long>(rep);
        const ScenarioConfig sub = subsample_users(cfg, m, seed * 1000 + m);
        for (const auto &method : spec.methods)
          tasks.push_back({sub, method, "users=" + std::to_string(m), static_cast<double>(m), rep, seed});
      }
    records = run_tasks(tasks, spec, kind);
    // PSO time to reach the proposed objective at the same point.
    for (auto &r : records)
    {
      if (r.method != "pso")
        continue;
      for (const auto &o : records)
        if (o.method == "proposed" && o.point == r.point && o.repetition == r.repetition && o.solution.feasible)
        {
          r.match_time_s = r.wall_time_s;
          const double target = o.solution.objective * (1.0 - spec.match_tol);
          for (const auto &p : r.pso_progress)
            if (p.best >= target)
            {
              r.match_time_s = p.wall_s;
              break;
            }
        }
    }
    write_sweep(dir, "users", "users", records);
    break;
  }
  case ExperimentKind::CrlbGrid: {
    for (FourthAnchor scheme : {FourthAnchor::Uav, FourthAnchor::Ground})
    {
      const Stopwatch clock;
      const GridMap map = crlb_grid_study(cfg, spec.grid, scheme, spec.threads);
      write_grid(dir, map);
      RunRecord r;
      r.kind = kind;
      r.method = scheme == FourthAnchor::Uav ? "uav" : "ground";
      r.solution.method = r.method;
      r.wall_time_s = clock.wall_s();
      r.cpu_time_s = clock.cpu_s();
      r.build_id = build_id();
      records.push_back(std::move(r));
    }
    break;
  }
  case ExperimentKind::Region: {
    const std::vector<double> eps = derive_accuracy_thresholds(cfg);
    json summary = json::array();
    for (double p : spec.region_powers)
    {
      const std::array<double, 3> pb{p, p, p};
      for (std::size_t k = 0; k < cfg.num_users(); ++k)
      {
        json entry{{"pos_power_w", p}, {"user", k}, {"altitude_m", spec.region_alt}};
        try
        {
          const FeasibleRegion reg = region_for_user(k, pb, eps[k], cfg);
          const auto poly = ellipse_polyline(reg, spec.region_alt);
          const std::string name = "region_p" + fmt(p) + "_user" + std::to_string(k) + ".csv";
          auto out = open_out(dir / name);
          out << "x,y\n";
          for (const auto &[x, y] : poly)
            out << fmt(x) << ',' << fmt(y) << '\n';
          entry["file"] = name;
          entry["case_sign"] = reg.case_sign;
        }
        catch (const Error &e)
        {
          entry["error"] = e.what();
        }
        summary.push_back(entry);
      }
    }
    write_json(dir / "regions.json", summary);
    RunRecord r;
    r.kind = kind;
    r.method = "region";
    r.build_id = build_id();
    records.push_back(std::move(r));
    break;
  }
  }
  write_timing(dir, records);
  return records;
}

} // namespace icl
