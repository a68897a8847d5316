#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "unident/adversary.hpp"
#include "unident/controller.hpp"
#include "unident/identifiability.hpp"

namespace unident::io {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Matrix matrix_from_json(const json& j, const char* what) {
  if (!j.is_array()) {
    throw Error(ErrorCode::ParseError, std::string(what) + " must be a nested array");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = -1;
  Matrix m;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array()) {
      throw Error(ErrorCode::ParseError, std::string(what) + " rows must be arrays");
    }
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      m.resize(rows, cols);
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::ParseError, std::string(what) + " is ragged");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& x = row[static_cast<std::size_t>(c)];
      if (!x.is_number()) {
        throw Error(ErrorCode::ParseError, std::string(what) + " has a non-numeric entry");
      }
      m(i, c) = x.get<double>();
    }
  }
  return rows == 0 ? Matrix(0, 0) : m;
}

inline Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) {
    throw Error(ErrorCode::ParseError, std::string(what) + " must be an array");
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw Error(ErrorCode::ParseError, std::string(what) + " has a non-numeric entry");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, origin + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  out << content;
}

// ---------------------------------------------------------------------------
// System JSON: {"A": [[...]], "B": ..., "C": ..., "mask": [["A",0,0], ...],
//               "x0": [...]}

inline json system_to_json(const LtiSystem& sys) {
  json mask = json::array();
  for (const auto& ref : sys.mask) {
    mask.push_back(json::array({block_name(ref.block), ref.row, ref.col}));
  }
  return {{"A", matrix_to_json(sys.A)},
          {"B", matrix_to_json(sys.B)},
          {"C", matrix_to_json(sys.C)},
          {"mask", mask},
          {"x0", vector_to_json(sys.initial_state())}};
}

/// A missing mask means every entry is free; a missing x0 means zero.
inline LtiSystem system_from_json(const json& j) {
  if (!j.is_object() || !j.contains("A") || !j.contains("B") || !j.contains("C")) {
    throw Error(ErrorCode::ParseError, "system JSON needs A, B and C");
  }
  LtiSystem sys;
  sys.A = matrix_from_json(j.at("A"), "A");
  sys.B = matrix_from_json(j.at("B"), "B");
  sys.C = matrix_from_json(j.at("C"), "C");
  if (j.contains("mask")) {
    for (const auto& e : j.at("mask")) {
      if (!e.is_array() || e.size() != 3 || !e[0].is_string() ||
          !e[1].is_number_integer() || !e[2].is_number_integer()) {
        throw Error(ErrorCode::ParseError, "mask entries look like [\"A\", row, col]");
      }
      const auto name = e[0].get<std::string>();
      Block b;
      if (name == "A") b = Block::A;
      else if (name == "B") b = Block::B;
      else if (name == "C") b = Block::C;
      else throw Error(ErrorCode::ParseError, "unknown mask block " + name);
      sys.mask.push_back({b, e[1].get<int>(), e[2].get<int>()});
    }
  } else {
    sys.mask = full_mask(sys.A.rows(), sys.B.cols(), sys.C.rows());
  }
  sys.x0 = j.contains("x0") ? vector_from_json(j.at("x0"), "x0")
                            : Vector::Zero(sys.A.rows());
  sys.validate();
  return sys;
}

inline LtiSystem load_system(const std::string& path) {
  return system_from_json(parse_json_text(read_file(path), path));
}

// ---------------------------------------------------------------------------
// Trajectory CSV: header t,u_1..u_l,y_1..y_m[,x_1..x_p]

inline std::string format_number(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << "t";
  for (Eigen::Index a = 0; a < traj.u.cols(); ++a) out << ",u_" << a + 1;
  for (Eigen::Index c = 0; c < traj.y.cols(); ++c) out << ",y_" << c + 1;
  for (Eigen::Index s = 0; s < traj.x.cols(); ++s) out << ",x_" << s + 1;
  out << "\n";
  for (Eigen::Index t = 0; t < traj.u.rows(); ++t) {
    out << t;
    for (Eigen::Index a = 0; a < traj.u.cols(); ++a) out << ',' << format_number(traj.u(t, a));
    for (Eigen::Index c = 0; c < traj.y.cols(); ++c) out << ',' << format_number(traj.y(t, c));
    for (Eigen::Index s = 0; s < traj.x.cols(); ++s) out << ',' << format_number(traj.x(t, s));
    out << "\n";
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

inline double parse_number(const std::string& s, std::size_t line) {
  // strtod accepts every format the writer emits, including exponents.
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::ParseError,
                "bad number '" + s + "' on line " + std::to_string(line));
  }
  return v;
}

/// Reads a trajectory CSV. The y and x column groups are optional, so a bare
/// input file (t,u_1..u_l) is also accepted.
inline Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty CSV");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t") {
    throw Error(ErrorCode::ParseError, "CSV header must start with 't'");
  }
  std::vector<std::size_t> ucol, ycol, xcol;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const auto& h = header[i];
    const auto expect = [&](const char* prefix, std::vector<std::size_t>& cols) {
      if (h != prefix + std::to_string(cols.size() + 1)) {
        throw Error(ErrorCode::ParseError, "unexpected CSV column '" + h + "'");
      }
      cols.push_back(i);
    };
    if (h.rfind("u_", 0) == 0) expect("u_", ucol);
    else if (h.rfind("y_", 0) == 0) expect("y_", ycol);
    else if (h.rfind("x_", 0) == 0) expect("x_", xcol);
    else throw Error(ErrorCode::ParseError, "unexpected CSV column '" + h + "'");
  }
  if (ucol.empty()) throw Error(ErrorCode::ParseError, "CSV has no input columns");

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "wrong column count on line " + std::to_string(lineno));
    }
    std::vector<double> vals(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) vals[i] = parse_number(cells[i], lineno);
    rows.push_back(std::move(vals));
  }
  const auto T = static_cast<Eigen::Index>(rows.size());
  auto fill = [&](const std::vector<std::size_t>& cols) {
    Matrix m(T, static_cast<Eigen::Index>(cols.size()));
    for (Eigen::Index t = 0; t < T; ++t)
      for (std::size_t c = 0; c < cols.size(); ++c)
        m(t, static_cast<Eigen::Index>(c)) = rows[static_cast<std::size_t>(t)][cols[c]];
    return m;
  };
  Trajectory traj;
  traj.u = fill(ucol);
  traj.y = fill(ycol);
  traj.x = fill(xcol);
  return traj;
}

inline Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
  return read_trajectory_csv(in);
}

// ---------------------------------------------------------------------------
// Reports and results

inline json report_to_json(const IdentifiabilityReport& rep) {
  json per = json::array();
  for (const auto& v : rep.per_param) {
    per.push_back({{"i", v.index}, {"identifiable", v.identifiable}});
  }
  json out = {{"rank_F", rep.rank_F},
              {"n", rep.n},
              {"T", rep.T},
              {"per_param", per},
              {"param_identifiable", rep.param_identifiable},
              {"dynamic_identifiable", rep.dynamic_identifiable},
              {"witness", rep.witness ? vector_to_json(*rep.witness) : json(nullptr)},
              {"residuals", {{"Wv", rep.residual_Wv}, {"Hv_rel", rep.residual_Hv_rel}}},
              {"null_dim", rep.null_basis.cols()}};
  out["theorem1_hypothesis_ok"] =
      rep.theorem1_hypothesis_ok ? json(*rep.theorem1_hypothesis_ok) : json(nullptr);
  return out;
}

inline json controller_to_json(const LowRankController& c) {
  return {{"mode", mode_name(c.mode)},
          {"K", matrix_to_json(c.K)},
          {"Lr", matrix_to_json(c.Lr)},
          {"V1", matrix_to_json(c.V1)},
          {"r", c.r},
          {"seed", c.seed}};
}

inline LowRankController controller_from_json(const json& j) {
  if (!j.is_object() || !j.contains("K") || !j.contains("V1")) {
    throw Error(ErrorCode::ParseError, "controller JSON needs K and V1");
  }
  LowRankController c;
  const auto mode = j.value("mode", std::string("state_feedback_reduced"));
  if (mode == "plain_lqr") c.mode = ControllerMode::PlainLqr;
  else if (mode == "state_feedback_reduced") c.mode = ControllerMode::StateFeedbackReduced;
  else throw Error(ErrorCode::ParseError, "unknown controller mode " + mode);
  c.K = matrix_from_json(j.at("K"), "K");
  c.V1 = matrix_from_json(j.at("V1"), "V1");
  c.V2 = c.V1;
  c.Lr = j.contains("Lr") ? matrix_from_json(j.at("Lr"), "Lr") : Matrix(-c.K);
  c.r = j.value("r", static_cast<int>(c.K.cols()));
  c.seed = j.value("seed", std::uint64_t{0});
  if (c.V1.cols() != c.K.cols() || c.Lr.rows() != c.K.rows() || c.Lr.cols() != c.K.cols()) {
    throw Error(ErrorCode::ParseError, "controller matrices have inconsistent shapes");
  }
  return c;
}

inline json ident_to_json(const IdentResult& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json markov = json::array();
  for (const auto& M : r.markov) markov.push_back(matrix_to_json(M));
  return {{"method", r.method},
          {"estimate", {{"markov", markov},
                        {"theta", r.theta_hat ? vector_to_json(*r.theta_hat) : json(nullptr)}}},
          {"param_error", opt(r.param_error)},
          {"markov_error", opt(r.markov_error)},
          {"pred_error", opt(r.pred_error)},
          {"regressor_rank", r.regressor_rank},
          {"iterations", r.iterations},
          {"final_loss", r.final_loss}};
}

inline void write_mc_csv(std::ostream& out, const std::vector<McRow>& rows) {
  out << "sample_size,metric,mean,std,runs\n";
  for (const auto& r : rows) {
    out << r.sample_size << ',' << r.metric << ',' << format_number(r.mean) << ','
        << format_number(r.std) << ',' << r.runs << "\n";
  }
}

inline void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_number(m(i, j));
    }
    out << "\n";
  }
}

/// Debug export: W.csv, F.csv, H.csv, Ja.csv and bundle.json describing the
/// row/column conventions.
inline void export_bundle(const std::string& dir, const SensitivityBundle& b) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_matrix_csv((base / "W.csv").string(), b.W);
  write_matrix_csv((base / "F.csv").string(), b.F);
  write_matrix_csv((base / "H.csv").string(), b.H);
  write_matrix_csv((base / "Ja.csv").string(), b.Ja);
  const json meta = {
      {"T", b.T}, {"m", b.m}, {"l", b.l}, {"n", b.n},
      {"W", {{"file", "W.csv"}, {"rows", "k*m + c (output time k, output channel c)"},
             {"cols", "parameter index i"}}},
      {"F", {{"file", "F.csv"}, {"definition", "W^T W"}}},
      {"H", {{"file", "H.csv"},
             {"rows", "((k*T + j)*l + a)*m + c (output time k, input time j, input "
                      "channel a, output channel c); zero when j >= k"},
             {"cols", "parameter index i"}}},
      {"Ja", {{"file", "Ja.csv"}, {"rows", "k*m + c"}, {"cols", "j*l + a"}}}};
  write_file((base / "bundle.json").string(), meta.dump(2) + "\n");
}

/// Weight argument: a scalar (scaled identity of size dim) or a JSON nested
/// array literal.
inline Matrix parse_weight(const std::string& text, Eigen::Index dim, const char* what) {
  double scalar = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, scalar);
  if (ec == std::errc() && ptr == last) {
    return scalar * Matrix::Identity(dim, dim);
  }
  const Matrix m = matrix_from_json(parse_json_text(text, what), what);
  if (m.rows() != dim || m.cols() != dim) {
    throw Error(ErrorCode::ShapeError, std::string(what) + " must be " +
                                           std::to_string(dim) + "x" + std::to_string(dim));
  }
  return m;
}

}  // namespace unident::io
