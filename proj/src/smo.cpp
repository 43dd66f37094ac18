#include "mlsvm/smo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "mlsvm/error.hpp"

namespace mlsvm {

void SolverConfig::validate() const {
    require(kkt_tolerance > 0.0, "solver tolerance must be positive");
}

RbfKernelSource::RbfKernelSource(Matrix points, double gamma) : points_(std::move(points)), gamma_(gamma) {
    require(gamma > 0.0, "RBF gamma must be positive");
    norms_ = points_.rowwise().squaredNorm();
}

void RbfKernelSource::row(std::size_t i, std::span<double> out) const {
    const auto r = static_cast<Eigen::Index>(i);
    Vector o(points_.rows());
    o.noalias() = points_ * points_.row(r).transpose();
    o = ((2.0 * o.array() - norms_.array() - norms_(r)).min(0.0) * gamma_).exp();
    o(r) = 1.0;
    std::copy(o.data(), o.data() + o.size(), out.begin());
}

KernelRowCache::KernelRowCache(const KernelSource& kernel, std::span<const int> y, std::size_t budget_bytes)
    : kernel_(kernel), y_(y.begin(), y.end()) {
    const std::size_t l = kernel.size();
    const std::size_t row_bytes = std::max<std::size_t>(1, l * sizeof(double));
    capacity_ = budget_bytes == 0 ? 0 : std::max<std::size_t>(2, std::min(l, budget_bytes / row_bytes));
    slot_of_.assign(l, -1);
    lru_pos_.resize(capacity_);
    scratch_[0].resize(l);
    scratch_[1].resize(l);
}

void KernelRowCache::fill(std::size_t i, std::vector<double>& buffer) {
    buffer.resize(kernel_.size());
    kernel_.row(i, buffer);
    const double yi = y_[i];
    for (std::size_t j = 0; j < buffer.size(); ++j) buffer[j] *= yi * y_[j];
}

std::span<const double> KernelRowCache::row(std::size_t i) {
    if (capacity_ == 0) {
        auto& buf = scratch_[next_scratch_];
        next_scratch_ ^= 1;
        fill(i, buf);
        ++misses_;
        return buf;
    }
    if (slot_of_[i] >= 0) {
        const auto slot = static_cast<std::size_t>(slot_of_[i]);
        lru_.splice(lru_.begin(), lru_, lru_pos_[slot]);
        ++hits_;
        return slots_[slot];
    }
    ++misses_;
    std::size_t slot;
    if (slots_.size() < capacity_) {
        slot = slots_.size();
        slots_.emplace_back();
        slot_owner_.push_back(i);
        lru_.push_front(slot);
    } else {
        slot = lru_.back();
        slot_of_[slot_owner_[slot]] = -1;
        slot_owner_[slot] = i;
        lru_.splice(lru_.begin(), lru_, std::prev(lru_.end()));
    }
    lru_pos_[slot] = lru_.begin();
    slot_of_[i] = static_cast<long>(slot);
    fill(i, slots_[slot]);
    return slots_[slot];
}

namespace {

constexpr double kTau = 1e-12;

class Smo {
public:
    Smo(const KernelSource& kernel, std::span<const int> y, std::span<const double> upper, const SolverConfig& cfg)
        : l_(kernel.size()), y_(y.begin(), y.end()), c_(upper.begin(), upper.end()), cfg_(cfg),
          cache_(kernel, y, cfg.cache_bytes) {
        qd_.resize(l_);
        for (std::size_t i = 0; i < l_; ++i) qd_[i] = kernel.diagonal(i);
        alpha_.assign(l_, 0.0);
        grad_.assign(l_, -1.0);
        grad_bar_.assign(l_, 0.0);
        active_.resize(l_);
        for (std::size_t i = 0; i < l_; ++i) active_[i] = i;
    }

    DualSolution run() {
        const std::size_t max_iter =
            cfg_.max_iterations ? cfg_.max_iterations : std::max<std::size_t>(10'000'000, 100 * l_);
        std::size_t iter = 0;
        std::size_t counter = std::min<std::size_t>(l_, 1000) + 1;
        bool limit = false;
        while (true) {
            if (iter >= max_iter) {
                limit = true;
                spdlog::warn("SMO stopped at the iteration limit ({}) before reaching tolerance", max_iter);
                break;
            }
            if (cfg_.shrinking && --counter == 0) {
                counter = std::min<std::size_t>(l_, 1000);
                shrink();
            }
            std::size_t i = 0;
            std::size_t j = 0;
            if (!select(i, j)) {
                if (active_.size() < l_) {
                    reconstruct_gradient();
                    restore_active();
                }
                if (!select(i, j)) break;
                counter = 1;
            }
            ++iter;
            step(i, j);
        }
        if (active_.size() < l_) {
            reconstruct_gradient();
            restore_active();
        }
        DualSolution sol;
        sol.alpha = alpha_;
        sol.bias = bias();
        double f = 0.0;
        for (std::size_t i = 0; i < l_; ++i) f += alpha_[i] * (grad_[i] - 1.0);
        sol.objective = -0.5 * f;
        sol.iterations = iter;
        sol.iteration_limit = limit;
        return sol;
    }

private:
    bool upper(std::size_t i) const { return alpha_[i] >= c_[i]; }
    bool lower(std::size_t i) const { return alpha_[i] <= 0.0; }

    bool select(std::size_t& out_i, std::size_t& out_j) {
        double gmax = -std::numeric_limits<double>::infinity();
        long imax = -1;
        for (std::size_t t : active_) {
            if (y_[t] > 0) {
                if (!upper(t) && -grad_[t] >= gmax) {
                    gmax = -grad_[t];
                    imax = static_cast<long>(t);
                }
            } else if (!lower(t) && grad_[t] >= gmax) {
                gmax = grad_[t];
                imax = static_cast<long>(t);
            }
        }
        if (imax < 0) return false;
        const auto i = static_cast<std::size_t>(imax);
        const auto qi = cache_.row(i);
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        long jmin = -1;
        for (std::size_t t : active_) {
            if (y_[t] > 0) {
                if (lower(t)) continue;
                const double diff = gmax + grad_[t];
                gmax2 = std::max(gmax2, grad_[t]);
                if (diff > 0) {
                    double quad = qd_[i] + qd_[t] - 2.0 * y_[i] * qi[t];
                    if (quad <= 0) quad = kTau;
                    const double obj = -(diff * diff) / quad;
                    if (obj <= best) {
                        best = obj;
                        jmin = static_cast<long>(t);
                    }
                }
            } else {
                if (upper(t)) continue;
                const double diff = gmax - grad_[t];
                gmax2 = std::max(gmax2, -grad_[t]);
                if (diff > 0) {
                    double quad = qd_[i] + qd_[t] + 2.0 * y_[i] * qi[t];
                    if (quad <= 0) quad = kTau;
                    const double obj = -(diff * diff) / quad;
                    if (obj <= best) {
                        best = obj;
                        jmin = static_cast<long>(t);
                    }
                }
            }
        }
        if (gmax + gmax2 < cfg_.kkt_tolerance || jmin < 0) return false;
        out_i = i;
        out_j = static_cast<std::size_t>(jmin);
        return true;
    }

    void step(std::size_t i, std::size_t j) {
        const auto qi = cache_.row(i);
        const auto qj = cache_.row(j);
        const double ci = c_[i];
        const double cj = c_[j];
        const double old_ai = alpha_[i];
        const double old_aj = alpha_[j];
        double ai = old_ai;
        double aj = old_aj;
        if (y_[i] != y_[j]) {
            double quad = qd_[i] + qd_[j] + 2.0 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (-grad_[i] - grad_[j]) / quad;
            const double diff = ai - aj;
            ai += delta;
            aj += delta;
            if (diff > 0) {
                if (aj < 0) {
                    aj = 0;
                    ai = diff;
                }
            } else if (ai < 0) {
                ai = 0;
                aj = -diff;
            }
            if (diff > ci - cj) {
                if (ai > ci) {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if (aj > cj) {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            double quad = qd_[i] + qd_[j] - 2.0 * qi[j];
            if (quad <= 0) quad = kTau;
            const double delta = (grad_[i] - grad_[j]) / quad;
            const double sum = ai + aj;
            ai -= delta;
            aj += delta;
            if (sum > ci) {
                if (ai > ci) {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if (aj < 0) {
                aj = 0;
                ai = sum;
            }
            if (sum > cj) {
                if (aj > cj) {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if (ai < 0) {
                ai = 0;
                aj = sum;
            }
        }
        const bool was_upper_i = upper(i);
        const bool was_upper_j = upper(j);
        alpha_[i] = std::clamp(ai, 0.0, ci);
        alpha_[j] = std::clamp(aj, 0.0, cj);
        const double dai = alpha_[i] - old_ai;
        const double daj = alpha_[j] - old_aj;
        for (std::size_t k : active_) grad_[k] += qi[k] * dai + qj[k] * daj;

        if (was_upper_i != upper(i)) {
            const double s = upper(i) ? ci : -ci;
            for (std::size_t k = 0; k < l_; ++k) grad_bar_[k] += s * qi[k];
        }
        if (was_upper_j != upper(j)) {
            const double s = upper(j) ? cj : -cj;
            for (std::size_t k = 0; k < l_; ++k) grad_bar_[k] += s * qj[k];
        }
    }

    bool shrinkable(std::size_t i, double gmax1, double gmax2) const {
        if (upper(i)) return y_[i] > 0 ? -grad_[i] > gmax1 : -grad_[i] > gmax2;
        if (lower(i)) return y_[i] > 0 ? grad_[i] > gmax2 : grad_[i] > gmax1;
        return false;
    }

    void shrink() {
        double gmax1 = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        for (std::size_t i : active_) {
            if (y_[i] > 0) {
                if (!upper(i)) gmax1 = std::max(gmax1, -grad_[i]);
                if (!lower(i)) gmax2 = std::max(gmax2, grad_[i]);
            } else {
                if (!upper(i)) gmax2 = std::max(gmax2, -grad_[i]);
                if (!lower(i)) gmax1 = std::max(gmax1, grad_[i]);
            }
        }
        if (!unshrink_ && gmax1 + gmax2 <= cfg_.kkt_tolerance * 10) {
            unshrink_ = true;
            reconstruct_gradient();
            restore_active();
        }
        std::vector<std::size_t> kept;
        kept.reserve(active_.size());
        for (std::size_t i : active_)
            if (!shrinkable(i, gmax1, gmax2)) kept.push_back(i);
        active_.swap(kept);
    }

    void restore_active() {
        active_.resize(l_);
        for (std::size_t i = 0; i < l_; ++i) active_[i] = i;
    }

    void reconstruct_gradient() {
        if (active_.size() == l_) return;
        std::vector<char> is_active(l_, 0);
        for (std::size_t i : active_) is_active[i] = 1;
        std::vector<std::size_t> inactive;
        for (std::size_t j = 0; j < l_; ++j)
            if (!is_active[j]) {
                inactive.push_back(j);
                grad_[j] = grad_bar_[j] - 1.0;
            }
        for (std::size_t i = 0; i < l_; ++i) {
            if (upper(i) || lower(i)) continue;
            const auto qi = cache_.row(i);
            for (std::size_t j : inactive) grad_[j] += alpha_[i] * qi[j];
        }
    }

    double bias() const {
        double ub = std::numeric_limits<double>::infinity();
        double lb = -std::numeric_limits<double>::infinity();
        double sum_free = 0.0;
        std::size_t free = 0;
        for (std::size_t i = 0; i < l_; ++i) {
            const double yg = y_[i] * grad_[i];
            if (upper(i)) {
                if (y_[i] < 0)
                    ub = std::min(ub, yg);
                else
                    lb = std::max(lb, yg);
            } else if (lower(i)) {
                if (y_[i] > 0)
                    ub = std::min(ub, yg);
                else
                    lb = std::max(lb, yg);
            } else {
                ++free;
                sum_free += yg;
            }
        }
        const double r = free > 0 ? sum_free / static_cast<double>(free) : (ub + lb) / 2.0;
        return -r;
    }

    std::size_t l_;
    std::vector<int> y_;
    std::vector<double> c_;
    SolverConfig cfg_;
    KernelRowCache cache_;
    std::vector<double> qd_;
    std::vector<double> alpha_;
    std::vector<double> grad_;
    std::vector<double> grad_bar_;
    std::vector<std::size_t> active_;
    bool unshrink_ = false;
};

}  // namespace

DualSolution solve_dual(const KernelSource& kernel, std::span<const int> y, std::span<const double> upper,
                        const SolverConfig& config) {
    config.validate();
    const std::size_t l = kernel.size();
    require(y.size() == l && upper.size() == l, "solve_dual: size mismatch");
    require(l >= 2, "solve_dual: need at least two points");
    bool pos = false;
    bool neg = false;
    for (std::size_t i = 0; i < l; ++i) {
        require(y[i] == 1 || y[i] == -1, "solve_dual: labels must be +1 or -1");
        require(upper[i] > 0.0, "solve_dual: box bounds must be positive");
        (y[i] > 0 ? pos : neg) = true;
    }
    require(pos && neg, "SVM training needs both classes");
    return Smo(kernel, y, upper, config).run();
}

}  // namespace mlsvm
