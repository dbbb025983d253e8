#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bethe/bethe.hpp"

using namespace bethe;

namespace {

struct Common {
  int threads = 0;
  bool threads_given = false;
  std::string out;
};

int resolve_cli_threads(const Common& c) {
  if (c.threads_given) return c.threads;
  if (const char* env = std::getenv("BETHE_COVERS_THREADS")) {
    try {
      return std::stoi(env);
    } catch (...) {
      throw validation_error("BETHE_COVERS_THREADS must be an integer, got '" + std::string(env) + "'");
    }
  }
  return 0;
}

void emit(const Common& c, const std::string& text) {
  if (c.out.empty() || c.out == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    write_file(c.out, text.back() == '\n' ? text : text + "\n");
  }
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void emit_json(const Common& c, const std::string& cmd, const json& config, const json& payload,
               std::chrono::steady_clock::time_point t0) {
  emit(c, envelope(cmd, config, payload, ms_since(t0)).dump(2));
}

AnyGraph load_graph(const std::string& path) { return parse_graph_json(read_file(path)); }

// weak accepts what the loop-calculus transform produces: signed or Hermitian non-PSD tables
ValidationOptions input_checks(bool weak) {
  ValidationOptions v;
  v.strict = !weak;
  v.allow_negative = weak;
  return v;
}

LiftMode lift_mode(const std::string& s) {
  if (s == "lifting") return LiftMode::lifting;
  if (s == "gauge") return LiftMode::gauge;
  if (s == "mc") return LiftMode::mc;
  if (s == "coefficients") return LiftMode::coefficients;
  throw validation_error("unknown mode '" + s + "'");
}

// ---------------------------------------------------------------- perm

struct PermArgs {
  std::string matrix;
  std::string method = "all";
  int M = 2;
  std::string mode = "coefficients";
  std::size_t samples = 2000;
  std::uint64_t seed = 0;
  std::string format = "csv";
};

int run_perm(const PermArgs& a, const Common& c) {
  auto t0 = std::chrono::steady_clock::now();
  Matrix theta = parse_matrix(read_file(a.matrix));
  const int n = static_cast<int>(theta.rows());
  const double p = perm_exact(theta);
  struct Row {
    std::string method;
    int M;
    double value, ratio, lo, hi;
    bool ok;
  };
  std::vector<Row> rows;
  auto want = [&](const char* m) { return a.method == "all" || a.method == m; };
  if (want("exact")) rows.push_back({"exact", 1, p, 1.0, 1.0, 1.0, true});
  if (want("bethe")) {
    double v = perm_bethe(theta).value;
    double hi = std::pow(2.0, 0.5 * n);
    double r = p / v;
    rows.push_back({"bethe", 1, v, r, 1.0, hi, r >= 1.0 - 1e-9 && r <= hi * (1 + 1e-9)});
  }
  if (want("scs")) {
    double v = perm_sinkhorn_scaled(theta).value;
    double lo = std::exp(n + log_factorial(n) - n * std::log(static_cast<double>(n))), hi = std::exp(n);
    double r = p / v;
    rows.push_back({"scs", 1, v, r, lo, hi, r >= lo * (1 - 1e-9) && r <= hi * (1 + 1e-9)});
  }
  if (want("degree-m") || want("scs-degree-m")) {
    DegreeMPermOptions o;
    o.mode = lift_mode(a.mode);
    o.seed = a.seed;
    o.samples = a.samples;
    o.threads = resolve_cli_threads(c);
    double bm = want("degree-m") ? perm_bethe_degree_m(theta, a.M, o).value : 0.0;
    double sm = want("scs-degree-m") ? perm_sinkhorn_degree_m(theta, a.M).value : 0.0;
    PermBounds b = degree_m_bounds(n, a.M, p, bm > 0 ? bm : 1.0, sm > 0 ? sm : 1.0);
    if (want("degree-m")) rows.push_back({"degree-m", a.M, bm, b.ratio_b, b.lo_b, b.hi_b, b.bethe_ok});
    if (want("scs-degree-m")) rows.push_back({"scs-degree-m", a.M, sm, b.ratio_scs, b.lo_scs, b.hi_scs, b.scs_ok});
  }
  if (want("ratio2")) {
    double r = perm_ratio_degree2(theta);
    double hi = std::pow(2.0, 0.25 * n);
    rows.push_back({"ratio2", 2, r, r, 1.0, hi, r >= 1.0 - 1e-9 && r <= hi * (1 + 1e-9)});
  }
  if (rows.empty()) throw validation_error("unknown method '" + a.method + "'");
  if (a.format == "json") {
    json arr = json::array();
    for (const auto& r : rows)
      arr.push_back({{"method", r.method}, {"M", r.M}, {"value", r.value}, {"perm", p}, {"ratio", r.ratio},
                     {"lower_bound", r.lo}, {"upper_bound", r.hi}, {"bound_ok", r.ok}});
    json cfg = {{"matrix", a.matrix}, {"method", a.method}, {"M", a.M}, {"mode", a.mode}, {"samples", a.samples},
                {"seed", a.seed}};
    emit_json(c, "perm", cfg, {{"n", n}, {"matrix", matrix_to_json(theta)}, {"results", arr}}, t0);
    return 0;
  }
  CsvWriter w({"method", "M", "value", "perm", "ratio", "lower_bound", "upper_bound", "bound_ok"});
  for (const auto& r : rows)
    w.row({r.method, cell(r.M), cell(r.value), cell(p), cell(r.ratio), cell(r.lo), cell(r.hi), cell(r.ok)});
  emit(c, w.str());
  return 0;
}

// ---------------------------------------------------------------- coeffs

struct CoeffArgs {
  int n = 2;
  int M = 2;
  std::string which = "all";
  bool triangle = false;
  bool check_bounds = false;
};

int run_coeffs(const CoeffArgs& a, const Common& c) {
  if (a.triangle) {
    emit(c, pascal_triangle_csv(a.M));
    return 0;
  }
  if (a.which != "all" && a.which != "c" && a.which != "cb" && a.which != "cscs")
    throw validation_error("--which must be c, cb, cscs or all");
  const bool wc = a.which == "all" || a.which == "c" || a.check_bounds;
  const bool wb = a.which == "all" || a.which == "cb" || a.check_bounds;
  const bool ws = a.which == "all" || a.which == "cscs" || a.check_bounds;
  std::vector<std::string> header;
  for (int i = 0; i < a.n; ++i)
    for (int j = 0; j < a.n; ++j) header.push_back("k" + std::to_string(i + 1) + std::to_string(j + 1));
  if (wc) header.push_back("C");
  if (wb) header.push_back("C_B");
  if (ws) header.push_back("C_scS");
  if (a.check_bounds)
    for (const char* h : {"ratio_B", "ratio_scS", "bethe_bound_ok", "scs_bound_ok"}) header.push_back(h);
  CsvWriter w(header);
  CoefficientCache cache;
  for (const auto& f : enumerate_gamma(a.n, a.M)) {
    std::vector<std::string> row;
    for (int k : f.K) row.push_back(cell(k));
    BigInt cnt = wc ? cache.count(f) : BigInt(0);
    if (wc) row.push_back(cnt.str());
    if (wb) row.push_back(rational_string(coeff_bethe_exact(f)));
    if (ws) row.push_back(rational_string(coeff_scaled_sinkhorn_exact(f)));
    if (a.check_bounds) {
      auto b = check_coefficient_bounds(f, cnt);
      row.push_back(cell(b.ratio_b));
      row.push_back(cell(b.ratio_scs));
      row.push_back(cell(b.bethe_ok));
      row.push_back(cell(b.scs_ok));
    }
    w.row(row);
  }
  emit(c, w.str());
  return 0;
}

// ---------------------------------------------------------------- spa

struct SpaArgs {
  std::string graph;
  int restarts = 16;
  double damping = -1.0;
  double tol = 1e-10;
  int max_iters = 10000;
  std::uint64_t seed = 0;
};

int run_spa(const SpaArgs& a, const Common& c) {
  auto t0 = std::chrono::steady_clock::now();
  AnyGraph ag = load_graph(a.graph);
  SpaOptions o;
  o.damping = a.damping;
  o.fp_tol = a.tol;
  o.max_iters = a.max_iters;
  o.seed = a.seed;
  json payload;
  int rc = 0;
  std::visit(
      [&](const auto& g) {
        require_valid(g);
        auto [mu, rep] = a.restarts > 0 ? best_fixed_point(g, a.restarts, a.seed, o, resolve_cli_threads(c))
                                        : spa_run(g, o);
        payload = {{"kind", kind_name(g.kind)}, {"report", spa_report_json(rep)}, {"messages", messages_json(g, mu)}};
        if (!rep.converged) rc = 4;
      },
      ag);
  json cfg = {{"graph", a.graph}, {"restarts", a.restarts}, {"damping", a.damping}, {"tol", a.tol},
              {"max_iters", a.max_iters}, {"seed", a.seed}};
  emit_json(c, "spa", cfg, payload, t0);
  if (rc) std::cerr << "error: SPA did not converge\n";
  return rc;
}

// ---------------------------------------------------------------- covers

struct CoverArgs {
  std::string graph;
  int M = 2;
  bool series = false;
  std::string mode = "auto";
  std::size_t samples = 2000;
  std::uint64_t seed = 0;
  double budget = 1e6;
  bool weak = false;
};

int run_covers(const CoverArgs& a, const Common& c) {
  AnyGraph ag = load_graph(a.graph);
  std::vector<DegreeMEstimate> ests;
  const int threads = resolve_cli_threads(c);
  std::visit(
      [&](const auto& g) {
        require_valid(g, input_checks(a.weak));
        if (a.mode == "auto") {
          SeriesOptions so;
          so.threads = threads;
          so.seed = a.seed;
          so.samples = a.samples;
          so.gauge_budget = a.budget;
          ests = degree_m_series(g, a.M, so);
          if (!a.series) ests = {ests.back()};
          return;
        }
        CoverOptions co;
        if (a.mode == "exact") co.mode = CoverMode::exact;
        else if (a.mode == "gauge") co.mode = CoverMode::gauge;
        else if (a.mode == "mc") co.mode = CoverMode::mc;
        else throw validation_error("--mode must be exact, gauge, mc or auto");
        co.threads = threads;
        co.seed = a.seed;
        co.samples = a.samples;
        co.enumeration_budget = a.budget;
        for (int M = a.series ? 1 : a.M; M <= a.M; ++M) ests.push_back(degree_m_bethe(g, M, co));
      },
      ag);
  emit(c, covers_csv(ests));
  return 0;
}

// ---------------------------------------------------------------- lct

struct LctArgs {
  std::string graph;
  std::uint64_t seed = 0;
  int restarts = 16;
  bool verify = false;
  std::string graph_out;
};

int run_lct(const LctArgs& a, const Common& c) {
  auto t0 = std::chrono::steady_clock::now();
  AnyGraph ag = load_graph(a.graph);
  json payload;
  bool failed = false;
  std::visit(
      [&](const auto& g) {
        require_valid(g);
        auto [mu, rep] = best_fixed_point(g, std::max(1, a.restarts), a.seed, SpaOptions{}, resolve_cli_threads(c));
        auto lr = lct_transform(g, mu);
        json edges = json::array();
        for (const auto& t : lr.edges) edges.push_back(edge_transform_json(g, t));
        payload = {{"Z_BSPA", scalar_json(*rep.Zbspa)},
                   {"transformed_graph", graph_to_json(lr.graph)},
                   {"edge_transforms", edges},
                   {"abs_sum_product", abs_sum_product(lr.graph)}};
        if (a.verify) {
          auto vr = verify_lct_properties(g, lr, mu);
          payload["property_report"] = lct_report_json(vr);
          failed = !vr.all_passed();
        }
        if (!a.graph_out.empty()) write_file(a.graph_out, graph_to_json(lr.graph).dump(2) + "\n");
      },
      ag);
  json cfg = {{"graph", a.graph}, {"seed", a.seed}, {"restarts", a.restarts}, {"verify", a.verify}};
  emit_json(c, "lct", cfg, payload, t0);
  if (failed) {
    std::cerr << "error: transformed graph failed a property check\n";
    return 4;
  }
  return 0;
}

// ---------------------------------------------------------------- sst

struct SstArgs {
  std::string graph;
  int M = 2;
  std::string method = "pe";
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  bool symmetrize = false;
  bool weak = false;
};

int run_sst(const SstArgs& a, const Common& c) {
  auto t0 = std::chrono::steady_clock::now();
  AnyGraph ag = load_graph(a.graph);
  json payload;
  std::visit(
      [&](const auto& g) {
        require_valid(g, input_checks(a.weak));
        if (a.method == "pe") {
          cplx z = cplx(zbm_power_via_pe(g, a.M));
          double root = z.real() < 0 ? std::numeric_limits<double>::quiet_NaN() : std::pow(z.real(), 1.0 / a.M);
          payload = {{"method", "pe"},           {"Z_BM_power", complex_json(z)}, {"Z_BM", nan_to_null(root)},
                     {"stderr", nullptr},        {"imag_residual", std::abs(z.imag()) / std::max(1e-300, std::abs(z))}};
        } else if (a.method == "mc") {
          McOptions o;
          o.samples = a.samples;
          o.seed = a.seed;
          o.threads = resolve_cli_threads(c);
          o.symmetrize = a.symmetrize;
          auto est = zbm_via_sst_mc(g, a.M, o);
          double root = est.mean.real() < 0 ? std::numeric_limits<double>::quiet_NaN()
                                             : std::pow(est.mean.real(), 1.0 / a.M);
          payload = {{"method", "mc"},
                     {"Z_BM_power", complex_json(est.mean)},
                     {"Z_BM", nan_to_null(root)},
                     {"stderr", {est.stderr_re, est.stderr_im}},
                     {"samples", est.samples},
                     {"imag_residual", std::abs(est.mean.imag()) / std::max(1e-300, std::abs(est.mean))}};
        } else {
          throw validation_error("--method must be pe or mc");
        }
      },
      ag);
  json cfg = {{"graph", a.graph}, {"M", a.M}, {"method", a.method}, {"samples", a.samples}, {"seed", a.seed},
              {"symmetrize", a.symmetrize}, {"weak", a.weak}};
  emit_json(c, "sst", cfg, payload, t0);
  return 0;
}

// ---------------------------------------------------------------- gct

struct GctArgs {
  std::string topology = "fig1";
  int graphs = 50;
  int M_max = 4;
  std::uint64_t seed = 0;
  std::string out = "gct_";
  double coupling = 0.01;
  int alphabet = 2;
  int mc_from = 4;
  std::size_t mc_samples = 2000;
};

int run_gct(const GctArgs& a, const Common& c) {
  ExperimentOptions o;
  o.topology = a.topology;
  o.n_graphs = a.graphs;
  o.M_max = a.M_max;
  o.seed = a.seed;
  o.coupling = a.coupling;
  o.alphabet = a.alphabet;
  o.mc_from = a.mc_from;
  o.mc_samples = a.mc_samples;
  o.threads = resolve_cli_threads(c);
  if (a.graphs < 1) throw validation_error("--graphs must be at least 1");
  auto r = convergence_experiment(o);
  write_file(a.out + "records.jsonl", gct_records_jsonl(r));
  write_file(a.out + "summary.csv", gct_summary_csv(r));
  for (int M = 1; M <= a.M_max; ++M) write_file(a.out + "cdf_M" + std::to_string(M) + ".csv", gct_cdf_csv(r, M));
  emit(c, gct_summary_csv(r));
  return 0;
}

// ---------------------------------------------------------------- graphs

struct ValidateArgs {
  std::string graph;
  bool weak = false;
};

int run_validate(const ValidateArgs& a, const Common& c) {
  auto t0 = std::chrono::steady_clock::now();
  AnyGraph ag = load_graph(a.graph);
  ValidationOptions vo;
  vo.strict = !a.weak;
  ValidationReport rep;
  std::string kind;
  std::visit(
      [&](const auto& g) {
        rep = validate_graph(g, vo);
        kind = kind_name(g.kind);
      },
      ag);
  json payload = validation_report_json(rep);
  payload["kind"] = kind;
  emit_json(c, "graph-validate", {{"graph", a.graph}, {"weak", a.weak}}, payload, t0);
  if (!rep.accepted) {
    std::cerr << "error: " << rep.errors.front() << "\n";
    return 2;
  }
  return 0;
}

struct RandomArgs {
  std::string topology = "fig1";
  std::string kind = "denfg";
  int alphabet = 2;
  std::uint64_t seed = 0;
  double coupling = 1.0;
};

int run_random(const RandomArgs& a, const Common& c) {
  Topology top = topology_preset(a.topology);
  if (a.alphabet < 1) throw validation_error("--alphabet must be at least 1");
  if (a.kind == "denfg") emit(c, graph_to_json(random_denfg(top, a.alphabet, a.seed, a.coupling)).dump(2));
  else if (a.kind == "snfg") emit(c, graph_to_json(random_snfg(top, a.alphabet, a.seed)).dump(2));
  else throw validation_error("--kind must be snfg or denfg");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bethe partition functions, graph covers and permanents"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  Common common;
  auto* threads_opt = app.add_option("--threads", common.threads, "worker threads (0 = auto)");
  app.add_option("--out", common.out, "output file (default stdout)");

  PermArgs pa;
  auto* perm = app.add_subcommand("perm", "permanent and its approximations");
  perm->add_option("--matrix", pa.matrix, "CSV or JSON matrix file")->required();
  perm->add_option("--method", pa.method, "exact|bethe|scs|degree-m|scs-degree-m|ratio2|all");
  perm->add_option("--M", pa.M, "cover degree");
  perm->add_option("--mode", pa.mode, "lifting|gauge|mc|coefficients");
  perm->add_option("--samples", pa.samples);
  perm->add_option("--seed", pa.seed);
  perm->add_option("--format", pa.format, "csv|json");

  CoeffArgs ca;
  auto* coeffs = app.add_subcommand("coeffs", "coefficients over fractional doubly stochastic matrices");
  coeffs->add_option("--n", ca.n);
  coeffs->add_option("--M", ca.M);
  coeffs->add_option("--which", ca.which, "c|cb|cscs|all");
  coeffs->add_flag("--triangle", ca.triangle, "n = 2 table up to degree M");
  coeffs->add_flag("--check-bounds", ca.check_bounds);

  SpaArgs sa;
  auto* spa = app.add_subcommand("spa", "sum-product algorithm");
  spa->add_option("--graph", sa.graph)->required();
  spa->add_option("--restarts", sa.restarts, "random restarts (0 = single run from uniform)");
  spa->add_option("--damping", sa.damping, "negative = automatic");
  spa->add_option("--tol", sa.tol);
  spa->add_option("--max-iters", sa.max_iters);
  spa->add_option("--seed", sa.seed);

  CoverArgs cva;
  auto* covers = app.add_subcommand("covers", "degree-M Bethe partition function");
  covers->add_option("--graph", cva.graph)->required();
  covers->add_option("--M", cva.M);
  covers->add_flag("--series", cva.series, "every degree 1..M");
  covers->add_option("--mode", cva.mode, "exact|gauge|mc|auto");
  covers->add_option("--samples", cva.samples);
  covers->add_option("--seed", cva.seed);
  covers->add_option("--budget", cva.budget, "enumeration budget");
  covers->add_flag("--weak", cva.weak, "accept signed or non-PSD tables");

  LctArgs la;
  auto* lct = app.add_subcommand("lct", "loop-calculus transform at the best SPA fixed point");
  lct->add_option("--graph", la.graph)->required();
  lct->add_option("--seed", la.seed);
  lct->add_option("--restarts", la.restarts);
  lct->add_flag("--verify", la.verify);
  lct->add_option("--graph-out", la.graph_out, "also write the transformed graph here");

  SstArgs ssa;
  auto* sst = app.add_subcommand("sst", "symmetric-subspace evaluation of Z_BM^M");
  sst->add_option("--graph", ssa.graph)->required();
  sst->add_option("--M", ssa.M);
  sst->add_option("--method", ssa.method, "pe|mc");
  sst->add_option("--samples", ssa.samples);
  sst->add_option("--seed", ssa.seed);
  sst->add_flag("--symmetrize", ssa.symmetrize);
  sst->add_flag("--weak", ssa.weak, "accept signed or non-PSD tables");

  GctArgs ga;
  auto* gct = app.add_subcommand("gct", "convergence experiment on random DE-NFGs");
  gct->add_option("--topology", ga.topology);
  gct->add_option("--graphs", ga.graphs);
  gct->add_option("--Mmax", ga.M_max);
  gct->add_option("--seed", ga.seed);
  gct->add_option("--out", ga.out, "output prefix");
  gct->add_option("--coupling", ga.coupling);
  gct->add_option("--alphabet", ga.alphabet);
  gct->add_option("--mc-from", ga.mc_from);
  gct->add_option("--mc-samples", ga.mc_samples);

  ValidateArgs va;
  auto* validate = app.add_subcommand("graph-validate", "structural and semantic graph checks");
  validate->add_option("--graph", va.graph)->required();
  validate->add_flag("--weak", va.weak, "accept Hermitian, non-PSD Choi matrices");

  RandomArgs ra;
  auto* rnd = app.add_subcommand("graph-random", "random graph on a preset topology");
  rnd->add_option("--topology", ra.topology);
  rnd->add_option("--kind", ra.kind, "snfg|denfg");
  rnd->add_option("--alphabet", ra.alphabet);
  rnd->add_option("--seed", ra.seed);
  rnd->add_option("--coupling", ra.coupling);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  common.threads_given = threads_opt->count() > 0;

  try {
    if (*perm) return run_perm(pa, common);
    if (*coeffs) return run_coeffs(ca, common);
    if (*spa) return run_spa(sa, common);
    if (*covers) return run_covers(cva, common);
    if (*lct) return run_lct(la, common);
    if (*sst) return run_sst(ssa, common);
    if (*gct) return run_gct(ga, common);
    if (*validate) return run_validate(va, common);
    if (*rnd) return run_random(ra, common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
