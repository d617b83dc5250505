#pragma once

#include <memory>
#include <numeric>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "sbn/core.hpp"

namespace sbn {

// Compressed-sparse-row matrix with its right-hand side. Column indices are
// sorted and unique within each row.
struct SparseSystem {
    int n = 0;
    std::vector<int> row_ptr;  // size n+1
    std::vector<int> col_idx;
    std::vector<double> values;
    std::vector<double> rhs;

    std::vector<double> multiply(const std::vector<double>& x) const {
        std::vector<double> y(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
                s += values[k] * x[col_idx[k]];
            y[i] = s;
        }
        return y;
    }

    double coeff(int i, int j) const {
        for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
            if (col_idx[k] == j) return values[k];
        return 0.0;
    }
};

// Accumulates triplets and compresses them deterministically (stable per-row
// merge in column order), applying strong Dirichlet rows/columns on the way:
// a constrained row becomes a unit row with the prescribed value on the right
// side, and its column is eliminated into the right-hand sides of the other
// rows.
class SystemBuilder {
  public:
    explicit SystemBuilder(int n) : n_(n), rhs_(n, 0.0) {}

    void add(int i, int j, double v) {
        if (v != 0.0) triplets_.push_back({i, j, v});
    }
    void add_rhs(int i, double v) { rhs_[i] += v; }
    std::vector<double>& rhs() { return rhs_; }

    void constrain(int dof, double value) { constraints_.push_back({dof, value}); }

    int size() const { return n_; }

    SparseSystem build() {
        std::vector<char> fixed(n_, 0);
        std::vector<double> fixed_value(n_, 0.0);
        for (auto [dof, value] : constraints_) {
            fixed[dof] = 1;
            fixed_value[dof] = value;
        }

        std::vector<Entry> kept;
        kept.reserve(triplets_.size() + constraints_.size());
        for (const Entry& e : triplets_) {
            if (fixed[e.i]) continue;
            if (fixed[e.j]) {
                rhs_[e.i] -= e.v * fixed_value[e.j];
                continue;
            }
            kept.push_back(e);
        }
        for (int i = 0; i < n_; ++i)
            if (fixed[i]) {
                kept.push_back({i, i, 1.0});
                rhs_[i] = fixed_value[i];
            }

        std::stable_sort(kept.begin(), kept.end(), [](const Entry& a, const Entry& b) {
            return a.i != b.i ? a.i < b.i : a.j < b.j;
        });

        SparseSystem s;
        s.n = n_;
        s.rhs = std::move(rhs_);
        s.row_ptr.assign(n_ + 1, 0);
        for (size_t k = 0; k < kept.size();) {
            size_t m = k + 1;
            double sum = kept[k].v;
            while (m < kept.size() && kept[m].i == kept[k].i && kept[m].j == kept[k].j)
                sum += kept[m++].v;
            s.col_idx.push_back(kept[k].j);
            s.values.push_back(sum);
            ++s.row_ptr[kept[k].i + 1];
            k = m;
        }
        std::partial_sum(s.row_ptr.begin(), s.row_ptr.end(), s.row_ptr.begin());
        return s;
    }

  private:
    struct Entry {
        int i, j;
        double v;
    };
    int n_;
    std::vector<Entry> triplets_;
    std::vector<double> rhs_;
    std::vector<std::pair<int, double>> constraints_;
};

struct SolveResult {
    std::vector<double> x;
    double relative_residual = 0.0;
};

namespace detail {

inline Eigen::SparseMatrix<double> to_eigen(const SparseSystem& s) {
    Eigen::SparseMatrix<double> m(s.n, s.n);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(s.values.size());
    for (int i = 0; i < s.n; ++i)
        for (int k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k)
            trips.emplace_back(i, s.col_idx[k], s.values[k]);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace detail

// Direct sparse LU (supernodal, partial pivoting, COLAMD ordering). The
// factorization is reusable across right-hand sides; the time steppers rely
// on that since the system matrices are constant in time.
class LuFactorization {
  public:
    void factorize(const SparseSystem& s) {
        matrix_ = std::make_unique<SparseSystem>(s);
        eigen_matrix_ = detail::to_eigen(s);
        lu_.compute(eigen_matrix_);
        if (lu_.info() != Eigen::Success)
            throw SolverError("sparse LU factorization failed: " +
                              lu_.lastErrorMessage());
    }

    bool ready() const { return matrix_ != nullptr; }

    SolveResult solve(const std::vector<double>& rhs) const {
        if (!matrix_) throw UsageError("LuFactorization::solve before factorize");
        const int n = matrix_->n;
        Eigen::VectorXd b(n);
        for (int i = 0; i < n; ++i) b[i] = rhs[i];
        Eigen::VectorXd x = lu_.solve(b);
        if (lu_.info() != Eigen::Success)
            throw SolverError("sparse LU back-substitution failed");
        SolveResult r;
        r.x.assign(x.data(), x.data() + n);
        r.relative_residual = residual(rhs, r.x);
        if (r.relative_residual > 1e-12) {
            // one step of iterative refinement
            std::vector<double> res = matrix_->multiply(r.x);
            for (int i = 0; i < n; ++i) res[i] = rhs[i] - res[i];
            Eigen::VectorXd rb(n);
            for (int i = 0; i < n; ++i) rb[i] = res[i];
            Eigen::VectorXd dx = lu_.solve(rb);
            if (lu_.info() == Eigen::Success) {
                std::vector<double> xr = r.x;
                for (int i = 0; i < n; ++i) xr[i] += dx[i];
                const double res2 = residual(rhs, xr);
                if (res2 < r.relative_residual) {
                    r.x = std::move(xr);
                    r.relative_residual = res2;
                }
            }
        }
        return r;
    }

  private:
    double residual(const std::vector<double>& rhs, const std::vector<double>& x) const {
        std::vector<double> ax = matrix_->multiply(x);
        double num = 0.0;
        for (int i = 0; i < matrix_->n; ++i) {
            const double d = ax[i] - rhs[i];
            num += d * d;
        }
        const double den = detail::norm2(rhs);
        return den == 0.0 ? std::sqrt(num) : std::sqrt(num) / den;
    }

    std::unique_ptr<SparseSystem> matrix_;
    Eigen::SparseMatrix<double> eigen_matrix_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

// One-shot direct solve of the stored system. The relative residual
// ||Ax-b||/||b|| is reported with the solution and checked by callers that
// need the 1e-10 contract.
inline SolveResult solve_sparse(const SparseSystem& s) {
    LuFactorization lu;
    lu.factorize(s);
    return lu.solve(s.rhs);
}

}  // namespace sbn
