#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <list>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mikani/ensemble.hpp"
#include "mikani/errors.hpp"

namespace mikani::ensemble {

using nlohmann::json;

void SvrConfig::validate() const {
    if (!(C > 0.0)) throw ValidationError("svr: C must be > 0");
    if (!(epsilon >= 0.0)) throw ValidationError("svr: epsilon must be >= 0");
    if (!(weight_zero > 0.0) || !(weight_pos > 0.0)) throw ValidationError("svr: sample weights must be > 0");
    if (gamma && !(*gamma > 0.0)) throw ValidationError("svr: gamma must be > 0");
    if (!(tolerance > 0.0)) throw ValidationError("svr: tolerance must be > 0");
    if (max_iterations == 0) throw ValidationError("svr: max_iterations must be > 0");
}

std::string_view kernel_name(Kernel k) { return k == Kernel::rbf ? "rbf" : "linear"; }

Kernel parse_kernel(std::string_view name) {
    if (name == "rbf") return Kernel::rbf;
    if (name == "linear") return Kernel::linear;
    throw ValidationError("unknown kernel '" + std::string(name) + "' (expected rbf|linear)");
}

namespace {

double kernel_value(Kernel k, double gamma, const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    if (k == Kernel::linear) {
        for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
        return acc;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::exp(-gamma * acc);
}

// Kernel rows K(i, .) with an LRU cache bounded by a memory budget.
class KernelRows {
public:
    KernelRows(const Matrix& x, Kernel kernel, double gamma)
        : x_(x), kernel_(kernel), gamma_(gamma), diag_(x.size()) {
        for (std::size_t i = 0; i < x.size(); ++i) diag_[i] = kernel_value(kernel_, gamma_, x[i], x[i]);
        constexpr std::size_t kBudgetBytes = std::size_t{512} << 20;
        capacity_ = std::max<std::size_t>(2, kBudgetBytes / (sizeof(double) * std::max<std::size_t>(x.size(), 1)));
    }

    double diag(std::size_t i) const { return diag_[i]; }

    const std::vector<double>& row(std::size_t i) {
        if (auto it = index_.find(i); it != index_.end()) {
            lru_.splice(lru_.begin(), lru_, it->second);
            return it->second->second;
        }
        if (lru_.size() >= capacity_) {
            index_.erase(lru_.back().first);
            lru_.pop_back();
        }
        std::vector<double> r(x_.size());
        for (std::size_t j = 0; j < x_.size(); ++j) r[j] = kernel_value(kernel_, gamma_, x_[i], x_[j]);
        lru_.emplace_front(i, std::move(r));
        index_[i] = lru_.begin();
        return lru_.front().second;
    }

private:
    const Matrix& x_;
    Kernel kernel_;
    double gamma_;
    std::vector<double> diag_;
    std::size_t capacity_;
    std::list<std::pair<std::size_t, std::vector<double>>> lru_;
    std::unordered_map<std::size_t, decltype(lru_)::iterator> index_;
};

double auto_gamma(const Matrix& rows) {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows) {
        for (double v : r) {
            sum += v;
            sum_sq += v * v;
            ++count;
        }
    }
    if (count == 0) return 1.0;
    const double mean = sum / static_cast<double>(count);
    const double var = sum_sq / static_cast<double>(count) - mean * mean;
    const double dim = static_cast<double>(rows.front().size());
    return var > 0.0 ? 1.0 / (dim * var) : 1.0;
}

constexpr double kTau = 1e-12;

}  // namespace

std::vector<double> sample_weights(const std::vector<double>& targets, const SvrConfig& config) {
    std::vector<double> w(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) w[i] = targets[i] == 0.0 ? config.weight_zero : config.weight_pos;
    return w;
}

SvrModel svr_train(const Matrix& rows, const std::vector<double>& targets, const SvrConfig& config,
                   SvrTrainReport* report) {
    return svr_train_weighted(rows, targets, sample_weights(targets, config), config, report);
}

SvrModel svr_train_weighted(const Matrix& rows, const std::vector<double>& targets, const std::vector<double>& weights,
                            const SvrConfig& config, SvrTrainReport* report) {
    config.validate();
    const std::size_t l = rows.size();
    if (l < 2) throw ValidationError("svr: need at least 2 training rows");
    if (targets.size() != l || weights.size() != l) throw ValidationError("svr: rows, targets and weights differ in length");
    const std::size_t dim = rows.front().size();
    if (dim == 0) throw ValidationError("svr: empty feature vectors");
    for (const auto& r : rows)
        if (r.size() != dim) throw ValidationError("svr: feature dimension mismatch in training rows");
    for (std::size_t i = 0; i < l; ++i) {
        if (!std::isfinite(targets[i])) throw ValidationError("svr: non-finite target");
        if (!(weights[i] > 0.0)) throw ValidationError("svr: sample weight must be > 0");
    }

    const double gamma = config.kernel == Kernel::rbf ? config.gamma.value_or(auto_gamma(rows)) : 0.0;
    KernelRows kernel(rows, config.kernel, gamma);

    // Dual over 2l variables: t < l is alpha_t (y = +1), t >= l is alpha*_{t-l} (y = -1).
    const std::size_t n = 2 * l;
    std::vector<double> alpha(n, 0.0);
    std::vector<double> upper(n);
    std::vector<double> p(n);
    std::vector<signed char> y(n);
    for (std::size_t i = 0; i < l; ++i) {
        upper[i] = upper[i + l] = config.C * weights[i];
        p[i] = config.epsilon - targets[i];
        p[i + l] = config.epsilon + targets[i];
        y[i] = 1;
        y[i + l] = -1;
    }
    std::vector<double> grad = p;
    auto sample = [l](std::size_t t) { return t < l ? t : t - l; };
    auto q = [&](std::size_t t, const std::vector<double>& krow, std::size_t s) {
        return static_cast<double>(y[t] * y[s]) * krow[sample(s)];
    };

    std::size_t iter = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (;; ++iter) {
        // Maximal violating i, then j by second-order gain.
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] == 1) {
                if (alpha[t] < upper[t] && -grad[t] >= gmax) {
                    gmax = -grad[t];
                    i = t;
                }
            } else if (alpha[t] > 0.0 && grad[t] >= gmax) {
                gmax = grad[t];
                i = t;
            }
        }
        if (i == n) {
            gap = 0.0;
            break;
        }
        const auto& krow_i = kernel.row(sample(i));
        const double kii = kernel.diag(sample(i));
        double gmax2 = -std::numeric_limits<double>::infinity();
        double best_obj = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            double grad_diff = 0.0;
            if (y[t] == 1) {
                if (!(alpha[t] > 0.0)) continue;
                grad_diff = gmax + grad[t];
                gmax2 = std::max(gmax2, grad[t]);
            } else {
                if (!(alpha[t] < upper[t])) continue;
                grad_diff = gmax - grad[t];
                gmax2 = std::max(gmax2, -grad[t]);
            }
            if (grad_diff > 0.0) {
                double quad = kii + kernel.diag(sample(t)) - 2.0 * krow_i[sample(t)];
                if (quad <= 0.0) quad = kTau;
                const double obj = -(grad_diff * grad_diff) / quad;
                if (obj <= best_obj) {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        gap = gmax + gmax2;
        if (gap < config.tolerance || j == n) break;
        if (iter >= config.max_iterations) {
            throw ConvergenceError("svr: no convergence after " + std::to_string(iter) +
                                       " iterations (KKT gap " + std::to_string(gap) + ")",
                                   gap);
        }

        const std::vector<double> krow_i_copy = krow_i;  // the next row() call may evict it
        const auto& krow_j = kernel.row(sample(j));
        const double ci = upper[i];
        const double cj = upper[j];
        const double old_ai = alpha[i];
        const double old_aj = alpha[j];
        const double qij = q(i, krow_i_copy, j);
        const double qd_i = kii;
        const double qd_j = kernel.diag(sample(j));

        if (y[i] != y[j]) {
            double quad = qd_i + qd_j + 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > ci - cj) {
                if (alpha[i] > ci) {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if (alpha[j] > cj) {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            double quad = qd_i + qd_j - 2.0 * qij;
            if (quad <= 0.0) quad = kTau;
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > ci) {
                if (alpha[i] > ci) {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > cj) {
                if (alpha[j] > cj) {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        const double dai = alpha[i] - old_ai;
        const double daj = alpha[j] - old_aj;
        for (std::size_t t = 0; t < n; ++t)
            grad[t] += q(i, krow_i_copy, t) * dai + q(j, krow_j, t) * daj;
    }

    // Bias from free variables, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t nr_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (alpha[t] >= upper[t]) {
            if (y[t] == -1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (alpha[t] <= 0.0) {
            if (y[t] == 1) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++nr_free;
            sum_free += yg;
        }
    }
    const double rho = nr_free > 0 ? sum_free / static_cast<double>(nr_free) : (ub + lb) / 2.0;

    SvrModel model;
    model.kernel = config.kernel;
    model.gamma = gamma;
    model.dim = dim;
    model.bias = -rho;
    model.config = config;
    for (std::size_t i = 0; i < l; ++i) {
        const double coef = alpha[i] - alpha[i + l];
        if (coef != 0.0) {
            model.support_vectors.push_back(rows[i]);
            model.dual_coef.push_back(coef);
        }
    }
    if (report != nullptr) {
        report->iterations = iter;
        report->kkt_gap = gap;
        double obj = 0.0;
        for (std::size_t t = 0; t < n; ++t) obj += alpha[t] * (grad[t] + p[t]);
        report->dual_objective = obj / 2.0;
        report->alpha = alpha;
        report->upper = upper;
    }
    return model;
}

double SvrModel::decision(const std::vector<double>& x) const {
    if (x.size() != dim)
        throw ValidationError("svr: row has dimension " + std::to_string(x.size()) + ", model expects " +
                              std::to_string(dim));
    double acc = bias;
    for (std::size_t i = 0; i < support_vectors.size(); ++i)
        acc += dual_coef[i] * kernel_value(kernel, gamma, support_vectors[i], x);
    return acc;
}

std::vector<double> svr_predict_raw(const SvrModel& model, const Matrix& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(model.decision(r));
    return out;
}

std::vector<double> svr_predict(const SvrModel& model, const Matrix& rows) {
    auto out = svr_predict_raw(model, rows);
    for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
    return out;
}

json model_to_json(const SvrModel& m) {
    json cfg{{"C", m.config.C},
             {"epsilon", m.config.epsilon},
             {"kernel", kernel_name(m.config.kernel)},
             {"weight_zero", m.config.weight_zero},
             {"weight_pos", m.config.weight_pos},
             {"tolerance", m.config.tolerance},
             {"max_iterations", m.config.max_iterations}};
    cfg["gamma"] = m.config.gamma ? json(*m.config.gamma) : json("auto");
    return {{"format", kModelFormat},
            {"version", kModelVersion},
            {"config", std::move(cfg)},
            {"kernel", kernel_name(m.kernel)},
            {"gamma", m.gamma},
            {"dim", m.dim},
            {"bias", m.bias},
            {"support_vectors", m.support_vectors},
            {"dual_coef", m.dual_coef}};
}

SvrModel model_from_json(const json& doc) {
    try {
        if (doc.at("format") != kModelFormat || doc.at("version") != kModelVersion)
            throw ValidationError("not a mikani-svr v1 model");
        SvrModel m;
        m.kernel = parse_kernel(doc.at("kernel").get<std::string>());
        m.gamma = doc.at("gamma").get<double>();
        m.dim = doc.at("dim").get<std::size_t>();
        m.bias = doc.at("bias").get<double>();
        m.support_vectors = doc.at("support_vectors").get<Matrix>();
        m.dual_coef = doc.at("dual_coef").get<std::vector<double>>();
        const auto& c = doc.at("config");
        m.config.C = c.at("C").get<double>();
        m.config.epsilon = c.at("epsilon").get<double>();
        m.config.kernel = parse_kernel(c.at("kernel").get<std::string>());
        m.config.weight_zero = c.at("weight_zero").get<double>();
        m.config.weight_pos = c.at("weight_pos").get<double>();
        m.config.tolerance = c.at("tolerance").get<double>();
        m.config.max_iterations = c.at("max_iterations").get<std::size_t>();
        if (c.at("gamma").is_number()) m.config.gamma = c["gamma"].get<double>();
        if (m.support_vectors.size() != m.dual_coef.size())
            throw ValidationError("model: support vector and coefficient counts differ");
        for (const auto& sv : m.support_vectors)
            if (sv.size() != m.dim) throw ValidationError("model: support vector dimension differs from stamp");
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed SVR model: ") + e.what());
    }
}

void save_model(const SvrModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write model " + path.string());
    out << model_to_json(model).dump(1) << '\n';
}

SvrModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model " + path.string());
    try {
        return model_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed SVR model: ") + e.what());
    }
}

}  // namespace mikani::ensemble
