#pragma once

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "covers.hpp"
#include "gct.hpp"
#include "graph.hpp"
#include "lct.hpp"
#include "perm.hpp"
#include "spa.hpp"

namespace bethe {

using json = nlohmann::json;
using AnyGraph = std::variant<Graph<double>, Graph<cplx>>;

constexpr const char* kToolVersion = "1.0.0";

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json complex_json(const cplx& z) { return json::array({z.real(), z.imag()}); }
inline json scalar_json(double v) { return v; }
inline json scalar_json(const cplx& z) { return complex_json(z); }

// ---------------------------------------------------------------- graph parsing

namespace detail {

[[noreturn]] inline void schema_error(const std::string& ptr, const std::string& what) {
  throw validation_error("graph JSON error at \"" + ptr + "\": " + what);
}

inline int get_int(const json& j, const std::string& ptr) {
  if (!j.is_number_integer()) schema_error(ptr, "expected an integer");
  return j.get<int>();
}

template <class T>
T get_value(const json& j, const std::string& ptr, Kind kind) {
  if (j.is_number()) return T(j.get<double>());
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number()) {
    if constexpr (is_complex_v<T>) {
      return T(j[0].get<double>(), j[1].get<double>());
    } else {
      (void)kind;
      schema_error(ptr, "complex value in a classical graph");
    }
  }
  schema_error(ptr, "expected a number or [re, im]");
}

template <class T>
Graph<T> parse_graph_typed(const json& doc, Kind kind) {
  if (!doc.contains("edges") || !doc["edges"].is_array()) schema_error("/edges", "missing edge array");
  std::vector<Edge> edges;
  int max_node = -1;
  std::set<int> ids;
  for (std::size_t k = 0; k < doc["edges"].size(); ++k) {
    const json& je = doc["edges"][k];
    const std::string p = "/edges/" + std::to_string(k);
    if (!je.is_object()) schema_error(p, "expected an object");
    if (!je.contains("id")) schema_error(p + "/id", "missing");
    if (!je.contains("endpoints") || !je["endpoints"].is_array() || je["endpoints"].size() != 2)
      schema_error(p + "/endpoints", "expected [i, j]");
    Edge e;
    e.id = get_int(je["id"], p + "/id");
    e.u = get_int(je["endpoints"][0], p + "/endpoints/0");
    e.v = get_int(je["endpoints"][1], p + "/endpoints/1");
    e.alphabet = je.contains("alphabet") ? get_int(je["alphabet"], p + "/alphabet") : 2;
    if (e.u < 0 || e.v < 0) schema_error(p + "/endpoints", "node indices must be non-negative");
    if (e.u == e.v) schema_error(p + "/endpoints", "endpoints must differ");
    if (e.u > e.v) schema_error(p + "/endpoints", "endpoints must satisfy i < j");
    if (e.alphabet < 1) schema_error(p + "/alphabet", "must be at least 1");
    if (!ids.insert(e.id).second) schema_error(p + "/id", "duplicate edge id");
    max_node = std::max(max_node, e.v);
    edges.push_back(e);
  }
  const json* jf = doc.contains("factors") ? &doc["factors"] : nullptr;
  if (jf && !jf->is_array()) schema_error("/factors", "expected an array");
  if (jf)
    for (std::size_t k = 0; k < jf->size(); ++k) {
      const json& f = (*jf)[k];
      if (!f.is_object() || !f.contains("node")) schema_error("/factors/" + std::to_string(k) + "/node", "missing");
      max_node = std::max(max_node, get_int(f["node"], "/factors/" + std::to_string(k) + "/node"));
    }
  int n = max_node + 1;
  if (doc.contains("nodes")) {
    int declared = get_int(doc["nodes"], "/nodes");
    if (declared < n) schema_error("/nodes", "fewer nodes than referenced");
    n = declared;
  }
  Graph<T> g = make_graph<T>(kind, n, edges);
  std::vector<bool> seen(n, false);
  if (jf)
    for (std::size_t k = 0; k < jf->size(); ++k) {
      const json& f = (*jf)[k];
      const std::string p = "/factors/" + std::to_string(k);
      int node = f["node"].get<int>();
      if (node < 0 || node >= n) schema_error(p + "/node", "node out of range");
      if (seen[node]) schema_error(p + "/node", "duplicate factor for node");
      seen[node] = true;
      Factor<T>& fac = g.factors[node];
      if (f.contains("dense")) {
        const json& d = f["dense"];
        if (!d.is_array()) schema_error(p + "/dense", "expected an array");
        if (d.size() != fac.full_size)
          schema_error(p + "/dense", "length " + std::to_string(d.size()) + " does not match table size " +
                                         std::to_string(fac.full_size));
        std::vector<T> vals(fac.full_size);
        for (std::size_t i = 0; i < d.size(); ++i) vals[i] = get_value<T>(d[i], p + "/dense/" + std::to_string(i), kind);
        fac.set_dense(std::move(vals));
      } else if (f.contains("sparse")) {
        const json& s = f["sparse"];
        if (!s.is_array()) schema_error(p + "/sparse", "expected an array");
        std::vector<std::pair<std::size_t, T>> nz;
        std::set<std::size_t> used;
        for (std::size_t i = 0; i < s.size(); ++i) {
          const std::string q = p + "/sparse/" + std::to_string(i);
          if (!s[i].contains("config") || !s[i]["config"].is_array()) schema_error(q + "/config", "missing");
          const json& c = s[i]["config"];
          if (c.size() != fac.edges.size()) schema_error(q + "/config", "length does not match node degree");
          std::vector<int> digits(c.size());
          for (std::size_t k2 = 0; k2 < c.size(); ++k2) {
            const std::string r = q + "/config/" + std::to_string(k2);
            const int a = g.edges[fac.edges[k2]].alphabet;
            if (c[k2].is_array()) {
              if (kind != Kind::double_edge || c[k2].size() != 2) schema_error(r, "symbol pairs only in double-edge graphs");
              int x = get_int(c[k2][0], r + "/0"), xp = get_int(c[k2][1], r + "/1");
              if (x < 0 || x >= a || xp < 0 || xp >= a) schema_error(r, "symbol out of range");
              digits[k2] = pair_symbol(a, x, xp);
            } else {
              digits[k2] = get_int(c[k2], r);
              if (digits[k2] < 0 || digits[k2] >= fac.radix[k2]) schema_error(r, "symbol out of range");
            }
          }
          std::size_t idx = encode_index(digits, fac.radix);
          if (!used.insert(idx).second) schema_error(q, "duplicate configuration");
          if (!s[i].contains("value")) schema_error(q + "/value", "missing");
          nz.emplace_back(idx, get_value<T>(s[i]["value"], q + "/value", kind));
        }
        if (fac.full_size <= 4096) {
          std::vector<T> vals(fac.full_size, T(0));
          for (auto& [i, v] : nz) vals[i] = v;
          fac.set_dense(std::move(vals));
        } else {
          fac.set_sparse(std::move(nz));
        }
      } else {
        schema_error(p, "factor needs \"dense\" or \"sparse\"");
      }
    }
  return g;
}

}  // namespace detail

inline AnyGraph parse_graph_json(const json& doc) {
  if (!doc.is_object()) detail::schema_error("", "expected an object");
  if (!doc.contains("kind") || !doc["kind"].is_string()) detail::schema_error("/kind", "expected \"snfg\" or \"denfg\"");
  std::string k = doc["kind"].get<std::string>();
  if (k == "snfg") return detail::parse_graph_typed<double>(doc, Kind::classical);
  if (k == "denfg") return detail::parse_graph_typed<cplx>(doc, Kind::double_edge);
  detail::schema_error("/kind", "expected \"snfg\" or \"denfg\"");
}

inline AnyGraph parse_graph_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw validation_error(std::string("graph JSON is not well-formed: ") + e.what());
  }
  return parse_graph_json(doc);
}

template <class T>
json graph_to_json(const Graph<T>& g) {
  json doc;
  doc["kind"] = kind_name(g.kind);
  doc["nodes"] = g.num_nodes;
  doc["edges"] = json::array();
  for (const auto& e : g.edges) doc["edges"].push_back({{"id", e.id}, {"endpoints", {e.u, e.v}}, {"alphabet", e.alphabet}});
  doc["factors"] = json::array();
  for (const auto& f : g.factors) {
    json jf;
    jf["node"] = f.node;
    if (f.sparse) {
      jf["sparse"] = json::array();
      for (const auto& [i, v] : f.entries) jf["sparse"].push_back({{"config", decode_index(i, f.radix)}, {"value", scalar_json(v)}});
    } else {
      jf["dense"] = json::array();
      for (const auto& v : f.dense) jf["dense"].push_back(scalar_json(v));
    }
    doc["factors"].push_back(std::move(jf));
  }
  return doc;
}

// ---------------------------------------------------------------- matrices

inline Matrix parse_matrix(const std::string& text, bool check_assumption = true) {
  std::vector<std::vector<double>> rows;
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw validation_error("empty matrix input");
  if (text[first] == '[') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw validation_error(std::string("matrix JSON is not well-formed: ") + e.what());
    }
    if (!doc.is_array()) throw validation_error("matrix JSON must be an array of rows");
    for (const auto& r : doc) {
      if (!r.is_array()) throw validation_error("matrix JSON must be an array of rows");
      std::vector<double> row;
      for (const auto& v : r) {
        if (!v.is_number()) throw validation_error("matrix entries must be numbers");
        row.push_back(v.get<double>());
      }
      rows.push_back(std::move(row));
    }
  } else {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      for (char& c : line)
        if (c == ',' || c == ';' || c == '\t' || c == '\r') c = ' ';
      std::istringstream ls(line);
      std::vector<double> row;
      std::string tok;
      while (ls >> tok) {
        try {
          std::size_t used = 0;
          row.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw validation_error("matrix entry '" + tok + "' is not a number");
        }
      }
      if (!row.empty()) rows.push_back(std::move(row));
    }
  }
  if (rows.empty()) throw validation_error("empty matrix input");
  const std::size_t n = rows.size();
  for (const auto& r : rows)
    if (r.size() != n) throw validation_error("matrix must be square");
  Matrix A(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) A(i, j) = rows[i][j];
  if (check_assumption) require_valid_matrix(A);
  return A;
}

inline json matrix_to_json(const Matrix& A) {
  json j = json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < A.cols(); ++k) r.push_back(A(i, k));
    j.push_back(std::move(r));
  }
  return j;
}

// ---------------------------------------------------------------- CSV

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : cols_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw validation_error("CSV row has the wrong number of cells");
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }

  std::string str() const { return os_.str(); }

 private:
  std::size_t cols_;
  std::ostringstream os_;
};

inline std::string cell(double v) { return format_double(v); }
inline std::string cell(int v) { return std::to_string(v); }
inline std::string cell(std::size_t v) { return std::to_string(v); }
inline std::string cell(bool v) { return v ? "true" : "false"; }
inline std::string cell(const std::string& s) { return s; }
inline std::string cell(const char* s) { return s; }

inline std::string covers_csv(const std::vector<DegreeMEstimate>& ests) {
  CsvWriter w({"M", "method", "Z_BM", "stderr", "covers_evaluated", "wall_ms"});
  for (const auto& e : ests)
    w.row({cell(e.M), e.method, cell(e.value), e.stderr_z < 0 ? std::string("") : cell(e.stderr_z), cell(e.samples),
           cell(e.wall_ms)});
  return w.str();
}

inline void write_file(const std::string& path, const std::string& content, bool append = false) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw resource_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw resource_error("failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- reports

template <class T>
json spa_report_json(const SpaReport<T>& r) {
  json j;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["residual"] = r.residual;
  j["damping"] = r.damping;
  j["rerandomizations"] = r.rerandomizations;
  j["near_zero_normalizers"] = r.near_zero_normalizers;
  j["Z_e"] = json::array();
  for (const auto& z : r.Ze) j["Z_e"].push_back(scalar_json(z));
  j["Z_f"] = json::array();
  for (const auto& z : r.Zf) j["Z_f"].push_back(scalar_json(z));
  j["Z_BSPA"] = r.Zbspa ? scalar_json(*r.Zbspa) : json(nullptr);
  if (!r.candidates.empty()) {
    j["chosen"] = r.chosen;
    j["candidates"] = json::array();
    for (const auto& c : r.candidates)
      j["candidates"].push_back(
          {{"converged", c.converged}, {"residual", c.residual}, {"Z_BSPA", c.value ? json(*c.value) : json(nullptr)}});
  }
  return j;
}

template <class T>
json messages_json(const Graph<T>& g, const MessageVector<T>& mu) {
  json j = json::array();
  for (int e = 0; e < g.num_edges(); ++e) {
    json a = json::array(), b = json::array();
    for (const auto& v : mu.msg[e][0]) a.push_back(scalar_json(v));
    for (const auto& v : mu.msg[e][1]) b.push_back(scalar_json(v));
    j.push_back({{"edge", g.edges[e].id}, {"to_first", a}, {"to_second", b}});
  }
  return j;
}

inline json lct_report_json(const LctReport& r) {
  json j;
  j["all_passed"] = r.all_passed();
  j["checks"] = json::array();
  for (const auto& c : r.checks)
    j["checks"].push_back(
        {{"name", c.name}, {"applicable", c.applicable}, {"passed", c.passed}, {"residual", c.residual}, {"tol", c.tol}});
  return j;
}

template <class T>
json edge_transform_json(const Graph<T>& g, const EdgeTransform<T>& t) {
  auto vec = [](const std::vector<T>& v) {
    json a = json::array();
    for (const auto& x : v) a.push_back(scalar_json(x));
    return a;
  };
  return {{"edge", g.edges[t.edge].id},   {"Z_e", scalar_json(t.Ze)},
          {"beta_e0", scalar_json(t.beta0)}, {"beta_one_branch", t.beta_one_branch},
          {"zeta", {scalar_json(t.zeta_i), scalar_json(t.zeta_j)}},
          {"chi", {scalar_json(t.chi_i), scalar_json(t.chi_j)}},
          {"delta", {scalar_json(t.delta_i), scalar_json(t.delta_j)}},
          {"eps", {scalar_json(t.eps_i), scalar_json(t.eps_j)}},
          {"M_first", vec(t.Mi)},         {"M_second", vec(t.Mj)},
          {"residual_rows", t.residual_rows}, {"residual_cols", t.residual_cols}};
}

inline json validation_report_json(const ValidationReport& r) {
  json j;
  j["accepted"] = r.accepted;
  j["structural_ok"] = r.structural_ok;
  j["connected"] = r.connected;
  j["errors"] = r.errors;
  j["offending_node"] = r.offending_node;
  j["nodes"] = json::array();
  for (const auto& n : r.nodes)
    j["nodes"].push_back({{"node", n.node},
                          {"hermitian_deviation", n.hermitian_dev},
                          {"min_eigenvalue", n.min_eig},
                          {"trace", n.trace},
                          {"min_value", n.min_value}});
  return j;
}

inline json envelope(const std::string& command, const json& config, const json& payload, double wall_ms) {
  return {{"tool", "bethe"}, {"version", kToolVersion}, {"command", command},
          {"config", config}, {"wall_ms", wall_ms},     {"payload", payload}};
}


// ---------------------------------------------------------------- gct

inline json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json gct_record_json(const GctRecord& r) {
  json s = json::array();
  for (const auto& p : r.series)
    s.push_back({{"M", p.M},
                 {"Z_BM", nan_to_null(p.value)},
                 {"stderr", p.stderr_z < 0 ? json(nullptr) : json(p.stderr_z)},
                 {"method", p.method},
                 {"rel_error", nan_to_null(p.rel_error)}});
  return {{"index", r.index},
          {"seed", r.seed},
          {"checkable", r.checkable},
          {"note", r.note},
          {"Z_star", nan_to_null(r.z_star)},
          {"Z_exact", nan_to_null(r.z_exact)},
          {"abs_sum_product", nan_to_null(r.abs_sum_product)},
          {"alpha", nan_to_null(r.alpha)},
          {"condition_satisfied", r.condition},
          {"series", s}};
}

inline std::string gct_records_jsonl(const ExperimentResult& r) {
  std::string out;
  for (const auto& rec : r.records) out += gct_record_json(rec).dump() + "\n";
  return out;
}

inline std::string gct_summary_csv(const ExperimentResult& r) {
  CsvWriter w({"M", "subset", "count", "mean_abs_rel_error", "std_abs_rel_error"});
  for (const auto& row : r.summary)
    w.row({cell(row.M), cell(row.subset), cell(row.count), cell(row.mean_abs_rel), cell(row.std_abs_rel)});
  return w.str();
}

inline std::string gct_cdf_csv(const ExperimentResult& r, int M) {
  CsvWriter w({"rel_error", "empirical_cdf"});
  for (const auto& [x, F] : empirical_cdf(r, M)) w.row({cell(x), cell(F)});
  return w.str();
}

}  // namespace bethe
