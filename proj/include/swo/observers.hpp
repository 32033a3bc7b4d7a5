#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "swo/model.hpp"
#include "swo/types.hpp"

namespace swo {

// Fixed bank ordering; switching ties break toward lower ids.
enum class ObserverKind : int { ELO = 0, EKF = 1, UKF = 2, QKF = 3, PF = 4 };
constexpr int kBankSize = 5;

inline std::string observer_name(ObserverKind k) {
    switch (k) {
        case ObserverKind::ELO: return "ELO";
        case ObserverKind::EKF: return "EKF";
        case ObserverKind::UKF: return "UKF";
        case ObserverKind::QKF: return "QKF";
        case ObserverKind::PF: return "PF";
    }
    throw contract_error("unknown observer kind");
}

inline ObserverKind parse_observer(std::string_view s) {
    for (int i = 0; i < kBankSize; ++i)
        if (observer_name(static_cast<ObserverKind>(i)) == s) return static_cast<ObserverKind>(i);
    throw contract_error("unknown observer '" + std::string(s) + "'");
}

struct ObserverConfig {
    Vec q_diag;  // process noise covariance diagonal (n)
    Vec r_diag;  // measurement noise covariance diagonal (p)
    double init_std = 0.01;
    double ukf_alpha = 1.0;
    double ukf_beta = 2.0;
    double ukf_kappa = 0.0;
    int qkf_points_per_axis = 3;
    double qkf_point_budget = 1e6;
    int pf_particles = 500;
    double fd_rel_step = 1e-6;
};

/// Per-step output of one observer.
struct EstimatorRecord {
    ObserverKind observer = ObserverKind::ELO;
    Vec x_hat;
    Vec y_hat;
    Vec e;  // y - y_hat
    double wall_seconds = 0.0;
    double ess = std::numeric_limits<double>::quiet_NaN();  // PF effective sample size
    bool weight_collapse = false;
};

/// Steady-state Kalman gain from the discrete Riccati recursion
/// P <- A (P - P C' (C P C' + R)^-1 C P) A' + Q, started at P = Q.
inline Mat steady_state_gain(const Mat& Ad, const Mat& C, const Mat& Q, const Mat& R,
                             double rel_tol = 1e-12, int max_iter = 100000) {
    const auto n = Ad.rows();
    if (Ad.cols() != n || C.cols() != n || Q.rows() != n || R.rows() != C.rows())
        throw contract_error("steady_state_gain: dimension mismatch");

    auto gain_of = [&](const Mat& P) -> Mat {
        Mat PCt = P * C.transpose();
        if (PCt.norm() == 0.0) return Mat::Zero(n, C.rows());
        Mat S = C * PCt + R;
        return S.ldlt().solve(PCt.transpose()).transpose();
    };

    Mat P = Q;
    for (int it = 0; it < max_iter; ++it) {
        Mat K = gain_of(P);
        Mat Pn = Ad * (P - K * C * P) * Ad.transpose() + Q;
        Pn = 0.5 * (Pn + Pn.transpose()).eval();
        const double denom = std::max(P.norm(), 1e-300);
        const double change = (Pn - P).norm() / denom;
        P = Pn;
        if (change < rel_tol) return gain_of(P);
    }
    throw numeric_error("steady_state_gain: Riccati recursion did not converge");
}

/// Unscented-transform sigma points and weights.
inline void ukf_sigma_points(const Vec& mean, const Mat& cov, double alpha, double beta,
                             double kappa, Mat& points, Vec& wm, Vec& wc);

namespace detail {

/// Lower Cholesky factor with diagonal jitter escalation before giving up.
inline Mat chol_psd(const Mat& P) {
    Eigen::LLT<Mat> llt(P);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    for (double jitter : {1e-12, 1e-9, 1e-6}) {
        Mat Pj = P + jitter * Mat::Identity(P.rows(), P.cols());
        llt.compute(Pj);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw numeric_error("covariance degeneracy: Cholesky failed after jitter escalation");
}

inline void symmetrize(Mat& P) { P = (0.5 * (P + P.transpose())).eval(); }

/// LDLT of an innovation covariance, escalating diagonal jitter so that a
/// merely singular (PSD) matrix — e.g. with zero measurement noise — still
/// yields a usable solve instead of aborting the filter.
inline Eigen::LDLT<Mat> ldlt_psd(const Mat& S, const char* who) {
    Eigen::LDLT<Mat> ldlt(S);
    if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) return ldlt;
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    for (double jitter : {1e-12, 1e-9, 1e-6}) {
        ldlt.compute(Mat(S + jitter * scale * Mat::Identity(S.rows(), S.cols())));
        if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0) return ldlt;
    }
    throw numeric_error(std::string(who) + ": singular innovation covariance");
}

}  // namespace detail

/// Common stepping interface of the bank members.
///
/// step() consumes one sample (u_k, y_k) and returns the observer's record
/// for that sample. `first` marks sample k = 0, where filters perform a
/// measurement update only (no time propagation precedes the first sample).
class Estimator {
public:
    Estimator(ObserverKind kind, DiscreteModel model, ObserverConfig cfg)
        : kind_(kind), model_(std::move(model)), cfg_(std::move(cfg)) {
        if (cfg_.q_diag.size() != model_.n || cfg_.r_diag.size() != model_.p)
            throw contract_error("Estimator: noise diagonal dimension mismatch");
        Q_ = cfg_.q_diag.asDiagonal();
        R_ = cfg_.r_diag.asDiagonal();
    }
    virtual ~Estimator() = default;

    EstimatorRecord step(const Vec& u, const Vec& y, bool first) {
        if (y.size() != model_.p) throw contract_error("Estimator::step: output dimension mismatch");
        EstimatorRecord rec;
        rec.observer = kind_;
        const auto t0 = std::chrono::steady_clock::now();
        do_step(u, y, first, rec);
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.y_hat = model_.h(rec.x_hat);
        rec.e = y - rec.y_hat;
        if (!rec.x_hat.allFinite())
            throw numeric_error(observer_name(kind_) + " diverged: nonfinite estimate");
        return rec;
    }

    ObserverKind kind() const { return kind_; }
    const DiscreteModel& model() const { return model_; }
    virtual const Vec& estimate() const = 0;
    virtual Mat covariance() const { return Mat::Zero(model_.n, model_.n); }

protected:
    virtual void do_step(const Vec& u, const Vec& y, bool first, EstimatorRecord& rec) = 0;

    ObserverKind kind_;
    DiscreteModel model_;
    ObserverConfig cfg_;
    Mat Q_, R_;
};

/// Luenberger-style observer: model rollout plus a fixed output-error gain.
class EloEstimator final : public Estimator {
public:
    EloEstimator(DiscreteModel model, ObserverConfig cfg, Vec x0, Mat gain)
        : Estimator(ObserverKind::ELO, std::move(model), std::move(cfg)),
          x_(std::move(x0)),
          L_(std::move(gain)) {
        if (L_.rows() != model_.n || L_.cols() != model_.p)
            throw contract_error("EloEstimator: gain must be n x p");
    }

    const Vec& estimate() const override { return x_; }

protected:
    void do_step(const Vec& u, const Vec& y, bool /*first*/, EstimatorRecord& rec) override {
        // Reports x_hat_k, then advances with the current innovation:
        // x_hat_{k+1} = f_d(x_hat_k, u_k) + L (y_k - h(x_hat_k)).
        rec.x_hat = x_;
        x_ = model_.f(x_, u) + L_ * (y - model_.h(x_));
    }

private:
    Vec x_;
    Mat L_;
};

/// Extended Kalman filter with finite-difference transition Jacobians.
class EkfEstimator final : public Estimator {
public:
    EkfEstimator(DiscreteModel model, ObserverConfig cfg, Vec x0, Mat P0)
        : Estimator(ObserverKind::EKF, std::move(model), std::move(cfg)),
          x_(std::move(x0)),
          P_(std::move(P0)) {}

    const Vec& estimate() const override { return x_; }
    Mat covariance() const override { return P_; }

protected:
    void do_step(const Vec& u, const Vec& y, bool first, EstimatorRecord& rec) override {
        if (!first) {
            const Mat F = model_.transition_jacobian(x_, u, cfg_.fd_rel_step);
            x_ = model_.f(x_, u);
            P_ = F * P_ * F.transpose() + Q_;
            detail::symmetrize(P_);
        }
        const Mat& H = model_.H;
        Mat S = H * P_ * H.transpose() + R_;
        const Eigen::LDLT<Mat> ldlt = detail::ldlt_psd(S, "EKF");
        Mat K = ldlt.solve(H * P_).transpose();
        x_ += K * (y - H * x_);
        P_ -= K * H * P_;
        detail::symmetrize(P_);
        rec.x_hat = x_;
    }

private:
    Vec x_;
    Mat P_;
};

inline void ukf_sigma_points(const Vec& mean, const Mat& cov, double alpha, double beta,
                             double kappa, Mat& points, Vec& wm, Vec& wc) {
    const int L = static_cast<int>(mean.size());
    const double lambda = alpha * alpha * (L + kappa) - L;
    const Mat S = detail::chol_psd(cov);
    const double scale = std::sqrt(L + lambda);

    points.resize(L, 2 * L + 1);
    points.col(0) = mean;
    for (int i = 0; i < L; ++i) {
        points.col(1 + i) = mean + scale * S.col(i);
        points.col(1 + L + i) = mean - scale * S.col(i);
    }
    wm.setConstant(2 * L + 1, 1.0 / (2.0 * (L + lambda)));
    wc = wm;
    wm[0] = lambda / (L + lambda);
    wc[0] = lambda / (L + lambda) + (1.0 - alpha * alpha + beta);
}

/// Unscented Kalman filter; sigma points are regenerated from the predicted
/// covariance before the measurement update.
class UkfEstimator final : public Estimator {
public:
    UkfEstimator(DiscreteModel model, ObserverConfig cfg, Vec x0, Mat P0)
        : Estimator(ObserverKind::UKF, std::move(model), std::move(cfg)),
          x_(std::move(x0)),
          P_(std::move(P0)) {}

    const Vec& estimate() const override { return x_; }
    Mat covariance() const override { return P_; }

protected:
    void do_step(const Vec& u, const Vec& y, bool first, EstimatorRecord& rec) override {
        Mat pts;
        Vec wm, wc;
        if (!first) {
            ukf_sigma_points(x_, P_, cfg_.ukf_alpha, cfg_.ukf_beta, cfg_.ukf_kappa, pts, wm, wc);
            const Mat prop = model_.f_batch(pts, u);
            x_ = prop * wm;
            const Mat centered = prop.colwise() - x_;
            P_ = centered * wc.asDiagonal() * centered.transpose() + Q_;
            detail::symmetrize(P_);
        }
        ukf_sigma_points(x_, P_, cfg_.ukf_alpha, cfg_.ukf_beta, cfg_.ukf_kappa, pts, wm, wc);
        const Mat Z = model_.h_batch(pts);
        const Vec zbar = Z * wm;
        const Mat Zc = Z.colwise() - zbar;
        const Mat Xc = pts.colwise() - x_;
        Mat Pzz = Zc * wc.asDiagonal() * Zc.transpose() + R_;
        const Mat Pxz = Xc * wc.asDiagonal() * Zc.transpose();
        const Eigen::LDLT<Mat> ldlt = detail::ldlt_psd(Pzz, "UKF");
        const Mat K = ldlt.solve(Pxz.transpose()).transpose();
        x_ += K * (y - zbar);
        P_ -= K * Pzz * K.transpose();
        detail::symmetrize(P_);
        rec.x_hat = x_;
    }

private:
    Vec x_;
    Mat P_;
};

/// Tensor-product Gauss-Hermite rule for a unit-variance Gaussian:
/// 1-D nodes {-sqrt(3), 0, sqrt(3)} with weights {1/6, 2/3, 1/6}.
inline void gh_points(int n, int points_per_axis, Mat& xi, Vec& w) {
    if (points_per_axis != 3)
        throw contract_error("gh_points: unsupported order (only 3 points per axis implemented)");
    if (n < 1) throw contract_error("gh_points: dimension must be >= 1");
    const double nodes[3] = {-std::sqrt(3.0), 0.0, std::sqrt(3.0)};
    const double weights[3] = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};

    long total = 1;
    for (int i = 0; i < n; ++i) total *= 3;
    xi.resize(n, total);
    w.resize(total);
    std::vector<int> digits(static_cast<size_t>(n), 0);
    for (long c = 0; c < total; ++c) {
        double wt = 1.0;
        for (int d = 0; d < n; ++d) {
            xi(d, c) = nodes[digits[static_cast<size_t>(d)]];
            wt *= weights[digits[static_cast<size_t>(d)]];
        }
        w[c] = wt;
        for (int d = 0; d < n; ++d) {
            if (++digits[static_cast<size_t>(d)] < 3) break;
            digits[static_cast<size_t>(d)] = 0;
        }
    }
}

/// Quadrature Kalman filter over the tensor Gauss-Hermite point set
/// (3^n points; refuses to construct beyond the point budget).
class QkfEstimator final : public Estimator {
public:
    QkfEstimator(DiscreteModel model, ObserverConfig cfg, Vec x0, Mat P0)
        : Estimator(ObserverKind::QKF, std::move(model), std::move(cfg)),
          x_(std::move(x0)),
          P_(std::move(P0)) {
        const double count = std::pow(static_cast<double>(cfg_.qkf_points_per_axis), model_.n);
        if (count > cfg_.qkf_point_budget)
            throw capacity_error("QKF: " + std::to_string(static_cast<long long>(count)) +
                                 " quadrature points exceed the budget of " +
                                 std::to_string(static_cast<long long>(cfg_.qkf_point_budget)));
        gh_points(model_.n, cfg_.qkf_points_per_axis, xi_, w_);
    }

    const Vec& estimate() const override { return x_; }
    Mat covariance() const override { return P_; }

protected:
    void do_step(const Vec& u, const Vec& y, bool first, EstimatorRecord& rec) override {
        if (!first) {
            make_points();
            const Mat prop = model_.f_batch(pts_, u);
            x_ = prop * w_;
            const Mat centered = prop.colwise() - x_;
            P_ = weighted_scatter(centered, centered) + Q_;
            detail::symmetrize(P_);
        }
        make_points();
        const Mat Z = model_.h_batch(pts_);
        const Vec zbar = Z * w_;
        const Mat Zc = Z.colwise() - zbar;
        const Mat Xc = pts_.colwise() - x_;
        Mat Pzz = weighted_scatter(Zc, Zc) + R_;
        const Mat Pxz = weighted_scatter(Xc, Zc);
        const Eigen::LDLT<Mat> ldlt = detail::ldlt_psd(Pzz, "QKF");
        const Mat K = ldlt.solve(Pxz.transpose()).transpose();
        x_ += K * (y - zbar);
        P_ -= K * Pzz * K.transpose();
        detail::symmetrize(P_);
        rec.x_hat = x_;
    }

private:
    void make_points() { pts_ = (detail::chol_psd(P_) * xi_).colwise() + x_; }

    Mat weighted_scatter(const Mat& A, const Mat& B) const {
        return A * w_.asDiagonal() * B.transpose();
    }

    Vec x_;
    Mat P_;
    Mat xi_;   // n x 3^n unit-Gaussian nodes
    Vec w_;    // 3^n weights
    Mat pts_;  // workspace
};

/// Systematic resampling: one uniform offset, N evenly spaced positions.
inline std::vector<int> systematic_resample(const Vec& weights, double offset) {
    const int N = static_cast<int>(weights.size());
    if (N < 1) throw contract_error("systematic_resample: empty weight vector");
    if (!(offset >= 0.0 && offset < 1.0))
        throw contract_error("systematic_resample: offset must be in [0, 1)");
    std::vector<int> idx(static_cast<size_t>(N));
    double cum = weights[0];
    int j = 0;
    for (int i = 0; i < N; ++i) {
        const double pos = (i + offset) / N;
        while (cum < pos && j + 1 < N) cum += weights[++j];
        idx[static_cast<size_t>(i)] = j;
    }
    return idx;
}

/// Bootstrap particle filter with systematic resampling every step.
class PfEstimator final : public Estimator {
public:
    PfEstimator(DiscreteModel model, ObserverConfig cfg, Mat particles, std::uint64_t seed)
        : Estimator(ObserverKind::PF, std::move(model), std::move(cfg)),
          particles_(std::move(particles)),
          rng_(seed) {
        if (particles_.rows() != model_.n || particles_.cols() < 2)
            throw contract_error("PfEstimator: need an n x N particle matrix with N >= 2");
        q_std_ = cfg_.q_diag.cwiseMax(0.0).cwiseSqrt();
        x_ = particles_.rowwise().mean();
        P_ = Mat::Zero(model_.n, model_.n);
    }

    const Vec& estimate() const override { return x_; }
    Mat covariance() const override { return P_; }

protected:
    void do_step(const Vec& u, const Vec& y, bool first, EstimatorRecord& rec) override {
        const int N = static_cast<int>(particles_.cols());
        if (!first) {
            particles_ = model_.f_batch(particles_, u);
            for (int c = 0; c < N; ++c)
                for (int r = 0; r < particles_.rows(); ++r)
                    particles_(r, c) += q_std_[r] * gauss_(rng_);
        }

        // Log-likelihoods under N(y; h(x_i), R); R is diagonal.
        const Mat Z = model_.h_batch(particles_);
        Vec logw(N);
        for (int c = 0; c < N; ++c) {
            double lw = 0.0;
            for (int i = 0; i < model_.p; ++i) {
                const double e = y[i] - Z(i, c);
                const double r = cfg_.r_diag[i];
                if (r > 0.0)
                    lw -= 0.5 * e * e / r;
                else if (e != 0.0)
                    lw = -std::numeric_limits<double>::infinity();
            }
            logw[c] = lw;
        }

        Vec w(N);
        const double maxlw = logw.maxCoeff();
        if (!std::isfinite(maxlw)) {
            rec.weight_collapse = true;
            w.setConstant(1.0 / N);
        } else {
            w = (logw.array() - maxlw).exp();
            const double total = w.sum();
            if (total <= 0.0 || !std::isfinite(total)) {
                rec.weight_collapse = true;
                w.setConstant(1.0 / N);
            } else {
                w /= total;
            }
        }

        x_ = particles_ * w;
        const Mat centered = particles_.colwise() - x_;
        P_ = centered * w.asDiagonal() * centered.transpose();
        rec.x_hat = x_;
        rec.ess = 1.0 / w.squaredNorm();

        const auto idx = systematic_resample(w, unif_(rng_));
        Mat next(particles_.rows(), N);
        for (int i = 0; i < N; ++i) next.col(i) = particles_.col(idx[static_cast<size_t>(i)]);
        particles_.swap(next);
    }

private:
    Mat particles_;
    Vec x_;
    Mat P_;
    Vec q_std_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> gauss_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

/// x_hat0 ~ N(x0_nominal, std^2 I) componentwise.
inline Vec draw_initial_estimate(const Vec& x0_nominal, double std_dev, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec x = x0_nominal;
    for (int i = 0; i < x.size(); ++i) x[i] += std_dev * gauss(rng);
    return x;
}

/// P0 = diag(x_hat0) with nonpositive entries floored at 1e-6.
inline Mat initial_covariance(const Vec& x_hat0) {
    Vec d = x_hat0.cwiseMax(1e-6);
    return d.asDiagonal();
}

/// Builds one bank member with its seeded initial state. The ELO gain is the
/// steady-state Kalman gain of the discrete linearization at x0_nominal.
inline std::unique_ptr<Estimator> make_estimator(ObserverKind kind, const DiscreteModel& model,
                                                 const ObserverConfig& cfg, const Vec& x0_nominal,
                                                 const Vec& u_nominal, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    switch (kind) {
        case ObserverKind::ELO: {
            const Vec x0 = draw_initial_estimate(x0_nominal, cfg.init_std, rng);
            const Mat Ad = model.transition_jacobian(x0_nominal, u_nominal, cfg.fd_rel_step);
            const Mat L = steady_state_gain(Ad, model.H, cfg.q_diag.asDiagonal(),
                                            cfg.r_diag.asDiagonal());
            return std::make_unique<EloEstimator>(model, cfg, x0, L);
        }
        case ObserverKind::EKF: {
            const Vec x0 = draw_initial_estimate(x0_nominal, cfg.init_std, rng);
            return std::make_unique<EkfEstimator>(model, cfg, x0, initial_covariance(x0));
        }
        case ObserverKind::UKF: {
            const Vec x0 = draw_initial_estimate(x0_nominal, cfg.init_std, rng);
            return std::make_unique<UkfEstimator>(model, cfg, x0, initial_covariance(x0));
        }
        case ObserverKind::QKF: {
            const Vec x0 = draw_initial_estimate(x0_nominal, cfg.init_std, rng);
            return std::make_unique<QkfEstimator>(model, cfg, x0, initial_covariance(x0));
        }
        case ObserverKind::PF: {
            Mat particles(model.n, cfg.pf_particles);
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int c = 0; c < cfg.pf_particles; ++c)
                for (int r = 0; r < model.n; ++r)
                    particles(r, c) = x0_nominal[r] + cfg.init_std * gauss(rng);
            return std::make_unique<PfEstimator>(model, cfg, std::move(particles), rng());
        }
    }
    throw contract_error("unknown observer kind");
}

}  // namespace swo
