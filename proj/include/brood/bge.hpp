#pragma once

// Gaussian data handling and the BGe local score, in natural-log space.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "brood/error.hpp"
#include "brood/linalg.hpp"
#include "brood/logspace.hpp"
#include "brood/node_set.hpp"

namespace brood {

/// n x p observations, mean-centred on construction.
class DataSet {
 public:
  DataSet() = default;

  explicit DataSet(Matrix raw) {
    require(raw.rows() >= 1 && raw.cols() >= 1, "DataSet: need at least one row and one column");
    require(raw.allFinite(), "DataSet: non-finite value in data");
    means_ = raw.colwise().mean().transpose();
    x_ = raw.rowwise() - means_.transpose();
    xtx_ = x_.transpose() * x_;
    xtx_ = 0.5 * (xtx_ + xtx_.transpose());
    for (Eigen::Index j = 0; j < x_.cols(); ++j)
      if (xtx_(j, j) <= 1e-12 * static_cast<double>(x_.rows())) degenerate_.push_back(static_cast<int>(j));
  }

  int n() const { return static_cast<int>(x_.rows()); }
  int p() const { return static_cast<int>(x_.cols()); }
  /// Centred observations.
  const Matrix& x() const { return x_; }
  /// Cross-product of the centred columns.
  const Matrix& xtx() const { return xtx_; }
  /// Column means of the raw data.
  const Vector& means() const { return means_; }
  /// Columns with (numerically) zero variance.
  const std::vector<int>& degenerate_columns() const { return degenerate_; }

 private:
  Matrix x_;
  Matrix xtx_;
  Vector means_;
  std::vector<int> degenerate_;
};

/// Parses numeric CSV, one observation per row. Empty cells, NA and other
/// non-numeric values are rejected.
inline DataSet parse_data_csv(const std::string& text, bool header) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  bool skipped_header = !header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      require(used > 0 && used == cell.size() && std::isfinite(v),
              "data CSV line " + std::to_string(line_no) + ": missing or non-numeric value '" + cell + "'");
      row.push_back(v);
    }
    if (line.back() == ',') require(false, "data CSV line " + std::to_string(line_no) + ": missing value");
    require(rows.empty() || row.size() == rows.front().size(),
            "data CSV line " + std::to_string(line_no) + ": ragged row");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "data CSV has no observations");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return DataSet(std::move(m));
}

inline DataSet read_data_csv(const std::string& path, bool header) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open data file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_data_csv(ss.str(), header);
}

/// BGe hyperparameters and the derived posterior scale matrix.
struct BgeHyper {
  int n = 0;
  int p = 0;
  double alpha_mu = 1.0;
  double alpha_w = 0.0;
  /// Prior scale T = t_scale * I.
  double t_scale = 0.0;
  /// alpha_w + n.
  double alpha_star = 0.0;
  /// T + centred cross-product (the prior-mean term vanishes on centred data).
  Matrix r_mat;
  /// Parent-size dependent constant of the local score, indexed by |pa|.
  std::vector<double> log_const;
  std::vector<int> degenerate_columns;
};

/// Defaults: alpha_mu = 1, alpha_w = p + 2, t = alpha_mu (alpha_w - p - 1) / (alpha_mu + 1).
inline BgeHyper build_hyper(const DataSet& d, double alpha_mu = 1.0, std::optional<double> alpha_w = std::nullopt) {
  require(d.n() >= 1, "build_hyper: need n >= 1");
  const int p = d.p();
  const double aw = alpha_w.value_or(p + 2.0);
  require(alpha_mu > 0.0, "build_hyper: alpha_mu must be positive");
  require(aw > p - 1.0, "build_hyper: alpha_w must exceed p - 1");
  BgeHyper h;
  h.n = d.n();
  h.p = p;
  h.alpha_mu = alpha_mu;
  h.alpha_w = aw;
  h.t_scale = alpha_mu * (aw - p - 1.0) / (alpha_mu + 1.0);
  require(h.t_scale > 0.0, "build_hyper: alpha_w must exceed p + 1 for a positive prior scale");
  h.alpha_star = aw + d.n();
  h.r_mat = d.xtx();
  h.r_mat.diagonal().array() += h.t_scale;
  h.degenerate_columns = d.degenerate_columns();

  const double n = d.n();
  h.log_const.resize(static_cast<std::size_t>(p));
  for (int l = 0; l < p; ++l) {
    const double a_prior = (aw - p + l + 1.0) / 2.0;
    const double a_post = (n + aw - p + l + 1.0) / 2.0;
    h.log_const[l] = -0.5 * n * std::log(std::numbers::pi) + 0.5 * std::log(alpha_mu / (n + alpha_mu)) +
                     std::lgamma(a_post) - std::lgamma(a_prior) +
                     0.5 * (aw - p + 2.0 * l + 1.0) * std::log(h.t_scale);
  }
  return h;
}

/// Running tallies of local-score work on the calling thread.
struct ScoreCounters {
  /// Local score values produced (direct or batched).
  std::uint64_t evaluations = 0;
  /// Scores mapped to -inf because a submatrix was numerically singular.
  std::uint64_t singular = 0;
};

inline ScoreCounters& score_counters() {
  thread_local ScoreCounters counters;
  return counters;
}

/// A decomposable local score S(X_i, pa) in log space.
class LocalScore {
 public:
  virtual ~LocalScore() = default;

  virtual int p() const = 0;

  /// log S(X_i, pa).
  virtual double score(int i, std::span<const int> pa) const = 0;

  /// Returns log S(X_i, pa) and writes log S(X_i, pa + {extra[k]}) to out[k].
  virtual double score_with_extensions(int i, std::span<const int> pa, std::span<const int> extra,
                                       std::span<double> out) const {
    std::vector<int> buf(pa.begin(), pa.end());
    buf.push_back(0);
    for (std::size_t k = 0; k < extra.size(); ++k) {
      buf.back() = extra[k];
      out[k] = score(i, buf);
    }
    return score(i, pa);
  }

  /// Scores every row of a subset table. Row s (an m-bit code over `cands`)
  /// is the parent set base + {cands[k] : bit k of s}; rows_out[s] receives its
  /// score and extra_out[s * extra.size() + k] the score with extra[k] added.
  virtual void score_rows(int i, std::span<const int> base, std::span<const int> cands, std::span<const int> extra,
                          std::span<double> rows_out, std::span<double> extra_out) const {
    const std::size_t rows = std::size_t{1} << cands.size();
    const std::size_t q = extra.size();
    std::vector<int> pa;
    for (std::size_t s = 0; s < rows; ++s) {
      pa.assign(base.begin(), base.end());
      for (std::size_t k = 0; k < cands.size(); ++k)
        if ((s >> k) & 1u) pa.push_back(cands[k]);
      rows_out[s] = score_with_extensions(i, pa, extra, extra_out.subspan(s * q, q));
    }
  }

  double score(int i, const NodeSet& pa) const {
    const auto v = pa.to_vector();
    return score(i, std::span<const int>(v));
  }
};

/// The BGe local score on a fixed data set.
class BgeScore final : public LocalScore {
 public:
  explicit BgeScore(BgeHyper hyper) : h_(std::move(hyper)) {}
  BgeScore(const DataSet& d, double alpha_mu = 1.0, std::optional<double> alpha_w = std::nullopt)
      : h_(build_hyper(d, alpha_mu, alpha_w)) {}

  using LocalScore::score;

  const BgeHyper& hyper() const { return h_; }
  int p() const override { return h_.p; }

  double score(int i, std::span<const int> pa) const override {
    return score_with_extensions(i, pa, {}, {});
  }

  /// Factors R restricted to pa once, then scores each pa + {j} by bordering
  /// that factor: one triangular solve per candidate instead of a fresh
  /// factorisation.
  double score_with_extensions(int i, std::span<const int> pa, std::span<const int> extra,
                               std::span<double> out) const override {
    const Matrix& r = h_.r_mat;
    const auto l = static_cast<Eigen::Index>(pa.size());
    auto& counters = score_counters();
    counters.evaluations += 1 + extra.size();

    std::vector<Eigen::Index> idx(pa.begin(), pa.end());
    Matrix lfac;
    Vector u;
    double logdet = 0.0;
    if (l > 0) {
      Eigen::LLT<Matrix> llt(r(idx, idx));
      if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().minCoeff() > kPivotFloor)) {
        counters.singular += 1 + extra.size();
        std::fill(out.begin(), out.end(), kNegInf);
        return kNegInf;
      }
      lfac = llt.matrixL();
      logdet = 2.0 * lfac.diagonal().array().log().sum();
      u = lfac.triangularView<Eigen::Lower>().solve(Vector(r(idx, i)));
    }
    const double rii = r(i, i);
    const double schur = rii - (l > 0 ? u.squaredNorm() : 0.0);
    const double base = local(static_cast<int>(l), logdet, schur, rii);
    if (base == kNegInf) ++counters.singular;

    if (!extra.empty()) {
      std::vector<Eigen::Index> cols(extra.begin(), extra.end());
      Matrix c;
      if (l > 0) c = lfac.triangularView<Eigen::Lower>().solve(Matrix(r(idx, cols)));
      for (std::size_t k = 0; k < extra.size(); ++k) {
        const Eigen::Index j = cols[k];
        const auto kk = static_cast<Eigen::Index>(k);
        const double d2 = r(j, j) - (l > 0 ? c.col(kk).squaredNorm() : 0.0);
        if (!(d2 > kPivotFloor * r(j, j)) || schur <= 0.0) {
          out[k] = kNegInf;
          ++counters.singular;
          continue;
        }
        const double g = r(j, i) - (l > 0 ? c.col(kk).dot(u) : 0.0);
        out[k] = local(static_cast<int>(l) + 1, logdet + std::log(d2), schur - g * g / d2, rii);
        if (out[k] == kNegInf) ++counters.singular;
      }
    }
    return base;
  }

  /// Depth-first over the subset lattice: each row's factor borders its
  /// parent row's factor by one candidate, and the projections of every other
  /// column are carried along, so a row costs O(|pa| * p) rather than a fresh
  /// factorisation plus one triangular solve per extension.
  void score_rows(int i, std::span<const int> base, std::span<const int> cands, std::span<const int> extra,
                  std::span<double> rows_out, std::span<double> extra_out) const override {
    Walk w(*this, i, base, cands, extra, rows_out, extra_out);
    w.run();
  }

 private:
  // Incremental state for score_rows. Columns are cands followed by extra.
  // For the current parent set pa with factor L, row t of `proj` holds
  // (L^{-1} R_{pa, cols})[t, :], so column norms and inner products with
  // u = L^{-1} R_{pa, i} are running sums over the rows pushed so far.
  struct Walk {
    const BgeScore& self;
    int node;
    std::span<const int> cands, extra;
    std::span<double> rows_out, extra_out;
    std::vector<int> cols;
    std::size_t width;
    std::vector<std::vector<double>> proj;
    std::vector<std::vector<double>> norm2;  // per depth, |L^{-1} R_{pa, col}|^2
    std::vector<std::vector<double>> gdot;   // per depth, (L^{-1} R_{pa, col}) . u
    std::vector<double> u;
    std::vector<double> schur;
    std::vector<double> logdet;
    std::vector<bool> dead;
    std::size_t base_depth = 0;

    Walk(const BgeScore& s, int i, std::span<const int> base, std::span<const int> c, std::span<const int> e,
         std::span<double> ro, std::span<double> eo)
        : self(s), node(i), cands(c), extra(e), rows_out(ro), extra_out(eo) {
      cols.assign(base.begin(), base.end());
      cols.insert(cols.end(), c.begin(), c.end());
      cols.insert(cols.end(), e.begin(), e.end());
      width = cols.size();
      const Matrix& r = self.h_.r_mat;
      norm2.assign(1, std::vector<double>(width, 0.0));
      gdot.assign(1, std::vector<double>(width, 0.0));
      schur.assign(1, r(i, i));
      logdet.assign(1, 0.0);
      dead.assign(1, false);
      for (std::size_t k = 0; k < base.size(); ++k) push(k);
      base_depth = base.size();
    }

    // Borders the factor with column `c` of cols.
    void push(std::size_t c) {
      const Matrix& r = self.h_.r_mat;
      const std::size_t depth = proj.size();
      const int j = cols[c];
      const double d2 = r(j, j) - norm2[depth][c];
      const bool now_dead = dead[depth] || !(d2 > kPivotFloor * r(j, j));
      std::vector<double> row(width, 0.0);
      double uj = 0.0;
      if (!now_dead) {
        const double d = std::sqrt(d2);
        for (std::size_t k = 0; k < width; ++k) {
          double acc = r(j, cols[k]);
          for (std::size_t t = 0; t < depth; ++t) acc -= proj[t][c] * proj[t][k];
          row[k] = acc / d;
        }
        double acc = r(j, node);
        for (std::size_t t = 0; t < depth; ++t) acc -= proj[t][c] * u[t];
        uj = acc / d;
        logdet.push_back(logdet[depth] + std::log(d2));
      } else {
        logdet.push_back(kNegInf);
      }
      norm2.push_back(norm2[depth]);
      gdot.push_back(gdot[depth]);
      for (std::size_t k = 0; k < width; ++k) {
        norm2.back()[k] += row[k] * row[k];
        gdot.back()[k] += row[k] * uj;
      }
      proj.push_back(std::move(row));
      u.push_back(uj);
      schur.push_back(schur[depth] - uj * uj);
      dead.push_back(now_dead);
    }

    void pop() {
      proj.pop_back();
      u.pop_back();
      norm2.pop_back();
      gdot.pop_back();
      schur.pop_back();
      logdet.pop_back();
      dead.pop_back();
    }

    void emit(std::size_t code) {
      const Matrix& r = self.h_.r_mat;
      const std::size_t depth = proj.size();
      const std::size_t q = extra.size();
      auto& counters = score_counters();
      counters.evaluations += 1 + q;
      const double rii = r(node, node);
      const int l = static_cast<int>(depth);
      if (dead[depth]) {
        rows_out[code] = kNegInf;
        for (std::size_t k = 0; k < q; ++k) extra_out[code * q + k] = kNegInf;
        counters.singular += 1 + q;
        return;
      }
      const double s = schur[depth];
      rows_out[code] = self.local(l, logdet[depth], s, rii);
      if (rows_out[code] == kNegInf) ++counters.singular;
      const std::size_t off = width - q;
      for (std::size_t k = 0; k < q; ++k) {
        const int j = extra[k];
        const double d2 = r(j, j) - norm2[depth][off + k];
        double v = kNegInf;
        if (d2 > kPivotFloor * r(j, j) && s > 0.0) {
          const double g = r(j, node) - gdot[depth][off + k];
          v = self.local(l + 1, logdet[depth] + std::log(d2), s - g * g / d2, rii);
        }
        if (v == kNegInf) ++counters.singular;
        extra_out[code * q + k] = v;
      }
    }

    void recurse(std::size_t next, std::size_t code) {
      emit(code);
      for (std::size_t k = next; k < cands.size(); ++k) {
        push(base_depth + k);
        recurse(k + 1, code | (std::size_t{1} << k));
        pop();
      }
    }

    void run() { recurse(0, 0); }
  };

  double local(int l, double logdet_pa, double schur, double rii) const {
    if (!(schur > kPivotFloor * rii)) return kNegInf;
    const double a_post = h_.n + h_.alpha_w - h_.p + l + 1.0;
    return h_.log_const[static_cast<std::size_t>(l)] - 0.5 * logdet_pa - 0.5 * a_post * std::log(schur);
  }

  BgeHyper h_;
};

/// Local score backed by an arbitrary function of (node, parent set); used for
/// synthetic score injection in tests and oracle studies.
class FunctionScore final : public LocalScore {
 public:
  using Fn = std::function<double(int, const NodeSet&)>;

  FunctionScore(int p, Fn fn) : p_(p), fn_(std::move(fn)) {}

  using LocalScore::score;

  int p() const override { return p_; }

  double score(int i, std::span<const int> pa) const override {
    ++score_counters().evaluations;
    return fn_(i, NodeSet::from(pa));
  }

 private:
  int p_;
  Fn fn_;
};

/// log S(X_i, pa | D) under BGe.
inline double node_score(int i, const NodeSet& pa, const BgeHyper& h) {
  require(!pa.contains(i), "node_score: node is its own parent");
  const auto v = pa.to_vector();
  return BgeScore(h).score(i, v);
}

/// node_score(i, pa + {j}) for every j in `candidates`, from one factorisation of pa.
inline std::vector<double> plus_one_scores(int i, const NodeSet& pa, const NodeSet& candidates, const BgeHyper& h) {
  require(!pa.contains(i), "plus_one_scores: node is its own parent");
  require(!candidates.intersects(pa) && !candidates.contains(i),
          "plus_one_scores: candidates must be disjoint from pa and the node");
  const auto base = pa.to_vector();
  const auto extra = candidates.to_vector();
  std::vector<double> out(extra.size());
  BgeScore(h).score_with_extensions(i, base, extra, out);
  return out;
}

}  // namespace brood
