#include "stshared/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace stshared {

namespace {

using Triplet = Eigen::Triplet<double>;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void add_scaled(std::vector<Triplet>& out, const SpMat& m, double scale, int offset) {
    for (int j = 0; j < m.outerSize(); ++j) {
        for (SpMat::InnerIterator it(m, j); it; ++it) {
            out.emplace_back(offset + static_cast<int>(it.row()), offset + j, scale * it.value());
        }
    }
}

void add_diagonal(std::vector<Triplet>& out, int offset, int n, double value) {
    for (int k = 0; k < n; ++k) out.emplace_back(offset + k, offset + k, value);
}

double uniform_sigma_log_prior(double log_tau, double upper) {
    // sigma = exp(-theta/2) ~ U(0, upper]
    if (log_tau < -2.0 * std::log(upper)) return kNegInf;
    return -std::log(upper) - std::numbers::ln2 - 0.5 * log_tau;
}

double gamma_log_prior(double log_x, double shape, double rate) {
    return shape * std::log(rate) - std::lgamma(shape) + shape * log_x - rate * std::exp(log_x);
}

std::vector<double> expanded_loadings(const ScalingBlocks& blocks, const std::vector<double>& rho) {
    if (static_cast<int>(rho.size()) != blocks.count()) throw std::invalid_argument("rho length must equal block count");
    for (double r : rho) {
        if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("scaling parameters must be positive");
    }
    std::vector<double> out;
    out.reserve(blocks.periods());
    for (int k = 0; k < blocks.count(); ++k) out.insert(out.end(), blocks.sizes[k], rho[k]);
    return out;
}

bool shared(Family f) { return f != Family::Independent; }

}  // namespace

std::string to_string(Family f) {
    switch (f) {
        case Family::Independent: return "independent";
        case Family::SharedSingle: return "shared_single";
        case Family::SharedFlexible: return "shared_flexible";
    }
    return "?";
}

std::string to_string(SpatialExtras e) {
    switch (e) {
        case SpatialExtras::None: return "none";
        case SpatialExtras::MortalityU: return "mortality_u";
        case SpatialExtras::SharedVarianceW: return "shared_w";
        case SpatialExtras::SeparateUV: return "separate_uv";
    }
    return "?";
}

std::string to_string(TemporalPrior p) { return p == TemporalPrior::RW1 ? "RW1" : "RW2"; }

Family family_from_string(const std::string& s) {
    if (s == "independent") return Family::Independent;
    if (s == "shared_single") return Family::SharedSingle;
    if (s == "shared_flexible") return Family::SharedFlexible;
    throw std::invalid_argument("unknown family '" + s + "'");
}

SpatialExtras extras_from_string(const std::string& s) {
    if (s == "none") return SpatialExtras::None;
    if (s == "mortality_u") return SpatialExtras::MortalityU;
    if (s == "shared_w") return SpatialExtras::SharedVarianceW;
    if (s == "separate_uv") return SpatialExtras::SeparateUV;
    throw std::invalid_argument("unknown spatial_extras '" + s + "'");
}

TemporalPrior temporal_from_string(const std::string& s) {
    if (s == "RW1" || s == "rw1") return TemporalPrior::RW1;
    if (s == "RW2" || s == "rw2") return TemporalPrior::RW2;
    throw std::invalid_argument("unknown temporal_prior '" + s + "'");
}

// ---------------------------------------------------------------------------

ScalingBlocks ScalingBlocks::even(int T, int l) {
    if (l < 1 || l > T) throw std::invalid_argument("number of scaling blocks must be in [1, T]");
    ScalingBlocks b;
    for (int k = 0; k < l; ++k) b.sizes.push_back(T / l + (k < T % l ? 1 : 0));
    return b;
}

int ScalingBlocks::periods() const {
    int s = 0;
    for (int m : sizes) s += m;
    return s;
}

std::vector<int> ScalingBlocks::block_of_period() const {
    std::vector<int> out;
    for (int k = 0; k < count(); ++k) out.insert(out.end(), sizes[k], k);
    return out;
}

void ScalingBlocks::validate(int T) const {
    if (sizes.empty() || count() > T) throw std::invalid_argument("number of scaling blocks must be in [1, T]");
    for (int m : sizes) {
        if (m < 1) throw std::invalid_argument("scaling block sizes must be positive");
    }
    if (periods() != T) {
        throw std::invalid_argument("scaling block sizes sum to " + std::to_string(periods()) + ", expected T = " +
                                    std::to_string(T));
    }
}

int ModelSpec::n_scalings() const {
    switch (family) {
        case Family::Independent: return 0;
        case Family::SharedSingle: return 1;
        case Family::SharedFlexible: return blocks.count();
    }
    return 0;
}

std::string ModelSpec::label() const {
    const std::string x = std::to_string(static_cast<int>(extras) + 1);
    switch (family) {
        case Family::Independent: return "1." + x;
        case Family::SharedSingle: return "2." + x;
        case Family::SharedFlexible: {
            const char suffix = blocks.count() == 1 ? 'a' : (blocks.count() == blocks.periods() ? 'b' : 'c');
            return "3." + x + suffix;
        }
    }
    return "?";
}

ModelSpec ModelSpec::from_label(const std::string& label, InteractionType interaction, int T) {
    if (label.empty() || label[0] < '1' || label[0] > '3') throw std::invalid_argument("bad model label '" + label + "'");
    ModelSpec s;
    s.interaction = interaction;
    s.blocks = ScalingBlocks::single(T);
    const char fam = label[0];
    std::size_t pos = 1;
    if (pos < label.size()) {
        if (label[pos] != '.' || pos + 1 >= label.size()) throw std::invalid_argument("bad model label '" + label + "'");
        const char x = label[pos + 1];
        if (x < '1' || x > '4') throw std::invalid_argument("bad model label '" + label + "'");
        s.extras = static_cast<SpatialExtras>(x - '1');
        pos += 2;
    }
    char suffix = 0;
    if (pos < label.size()) {
        suffix = label[pos];
        if (pos + 1 != label.size() || fam != '3' || (suffix != 'a' && suffix != 'b' && suffix != 'c')) {
            throw std::invalid_argument("bad model label '" + label + "'");
        }
    }
    switch (fam) {
        case '1': s.family = Family::Independent; break;
        case '2': s.family = Family::SharedSingle; break;
        default:
            s.family = Family::SharedFlexible;
            if (suffix == 'a') s.blocks = ScalingBlocks::single(T);
            else if (suffix == 'b') s.blocks = ScalingBlocks::even(T, T);
            else s.blocks = ScalingBlocks::even(T, std::min(3, T));
    }
    return s;
}

std::string to_config(const ModelSpec& spec) {
    nlohmann::ordered_json j;
    j["family"] = to_string(spec.family);
    j["interaction"] = to_string(spec.interaction);
    j["blocks"] = spec.blocks.sizes;
    j["spatial_extras"] = to_string(spec.extras);
    j["temporal_prior"] = to_string(spec.temporal);
    j["priors"] = {{"sigma_upper", spec.priors.sigma_upper},
                   {"intercept_precision", spec.priors.intercept_precision},
                   {"scaling_shape", spec.priors.scaling_shape},
                   {"scaling_rate", spec.priors.scaling_rate},
                   {"log_tau_eps", spec.priors.log_tau_eps}};
    return j.dump(2);
}

ModelSpec model_spec_from_config(const std::string& text, int T) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("model config: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("model config must be an object");
    ModelSpec s;
    try {
        if (j.contains("label")) {
            s = ModelSpec::from_label(j["label"].get<std::string>(),
                                      interaction_from_string(j.value("interaction", std::string("I"))), T);
        }
        if (j.contains("family")) s.family = family_from_string(j["family"].get<std::string>());
        if (j.contains("interaction")) s.interaction = interaction_from_string(j["interaction"].get<std::string>());
        if (j.contains("spatial_extras")) s.extras = extras_from_string(j["spatial_extras"].get<std::string>());
        if (j.contains("temporal_prior")) s.temporal = temporal_from_string(j["temporal_prior"].get<std::string>());
        if (j.contains("blocks")) {
            s.blocks.sizes = j["blocks"].get<std::vector<int>>();
        } else if (!j.contains("label")) {
            s.blocks = ScalingBlocks::single(T);
        }
        if (j.contains("priors")) {
            const auto& p = j["priors"];
            s.priors.sigma_upper = p.value("sigma_upper", s.priors.sigma_upper);
            s.priors.intercept_precision = p.value("intercept_precision", s.priors.intercept_precision);
            s.priors.scaling_shape = p.value("scaling_shape", s.priors.scaling_shape);
            s.priors.scaling_rate = p.value("scaling_rate", s.priors.scaling_rate);
            s.priors.log_tau_eps = p.value("log_tau_eps", s.priors.log_tau_eps);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("model config: ") + e.what());
    }
    if (s.family == Family::SharedSingle && s.blocks.count() != 1) {
        throw std::invalid_argument("shared_single requires exactly one scaling block");
    }
    if (s.family != Family::Independent) s.blocks.validate(T);
    return s;
}

// ---------------------------------------------------------------------------

LatentLayout layout(const ModelSpec& spec, int A, int T) {
    if (A < 2 || T < 2) throw std::invalid_argument("layout requires A >= 2 and T >= 2");
    if (spec.family != Family::Independent) spec.blocks.validate(T);
    LatentLayout l;
    l.A = A;
    l.T = T;
    int next = 2;
    l.alpha = 0;
    l.kappa = next;
    next += A;
    switch (spec.extras) {
        case SpatialExtras::None: break;
        case SpatialExtras::MortalityU: l.u = next; next += A; break;
        case SpatialExtras::SharedVarianceW: l.w = next; next += 2 * A; break;
        case SpatialExtras::SeparateUV:
            l.u = next;
            next += A;
            l.v = next;
            next += A;
            break;
    }
    l.gamma_i = next;
    next += T;
    l.gamma_m = next;
    next += T;
    l.inter_i = next;
    next += T * A;
    l.inter_m = next;
    next += T * A;
    l.total = next;
    return l;
}

std::vector<std::string> hyper_names(const ModelSpec& spec) {
    std::vector<std::string> n = {"log_tau_kappa", "log_tau_gamma_I", "log_tau_gamma_M"};
    if (spec.family == Family::Independent) {
        n.emplace_back("log_tau_chi_I");
        n.emplace_back("log_tau_chi_M");
    } else {
        n.emplace_back("log_tau_chi");
    }
    n.emplace_back("log_delta");
    for (int k = 0; k < spec.n_scalings(); ++k) n.push_back("log_rho_" + std::to_string(k + 1));
    switch (spec.extras) {
        case SpatialExtras::None: break;
        case SpatialExtras::MortalityU: n.emplace_back("log_tau_u"); break;
        case SpatialExtras::SharedVarianceW: n.emplace_back("log_tau_w"); break;
        case SpatialExtras::SeparateUV:
            n.emplace_back("log_tau_u");
            n.emplace_back("log_tau_v");
            break;
    }
    return n;
}

Eigen::VectorXd to_internal(const HyperParams& h, const ModelSpec& spec) {
    std::vector<double> v = {std::log(h.tau_kappa), std::log(h.tau_gamma_i), std::log(h.tau_gamma_m)};
    if (spec.family == Family::Independent) {
        v.push_back(std::log(h.tau_chi_i));
        v.push_back(std::log(h.tau_chi_m));
    } else {
        v.push_back(std::log(h.tau_chi));
    }
    v.push_back(std::log(h.delta));
    if (static_cast<int>(h.rho.size()) != spec.n_scalings()) throw std::invalid_argument("rho length mismatch");
    for (double r : h.rho) v.push_back(std::log(r));
    switch (spec.extras) {
        case SpatialExtras::None: break;
        case SpatialExtras::MortalityU: v.push_back(std::log(h.tau_u)); break;
        case SpatialExtras::SharedVarianceW: v.push_back(std::log(h.tau_w)); break;
        case SpatialExtras::SeparateUV:
            v.push_back(std::log(h.tau_u));
            v.push_back(std::log(h.tau_v));
            break;
    }
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

HyperParams from_internal(const Eigen::VectorXd& theta, const ModelSpec& spec) {
    const auto names = hyper_names(spec);
    if (theta.size() != static_cast<Eigen::Index>(names.size())) throw std::invalid_argument("theta length mismatch");
    HyperParams h;
    h.tau_eps = std::exp(spec.priors.log_tau_eps);
    int k = 0;
    h.tau_kappa = std::exp(theta[k++]);
    h.tau_gamma_i = std::exp(theta[k++]);
    h.tau_gamma_m = std::exp(theta[k++]);
    if (spec.family == Family::Independent) {
        h.tau_chi_i = std::exp(theta[k++]);
        h.tau_chi_m = std::exp(theta[k++]);
    } else {
        h.tau_chi = std::exp(theta[k++]);
    }
    h.delta = std::exp(theta[k++]);
    for (int r = 0; r < spec.n_scalings(); ++r) h.rho.push_back(std::exp(theta[k++]));
    switch (spec.extras) {
        case SpatialExtras::None: break;
        case SpatialExtras::MortalityU: h.tau_u = std::exp(theta[k++]); break;
        case SpatialExtras::SharedVarianceW: h.tau_w = std::exp(theta[k++]); break;
        case SpatialExtras::SeparateUV:
            h.tau_u = std::exp(theta[k++]);
            h.tau_v = std::exp(theta[k++]);
            break;
    }
    return h;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd build_z3(const ScalingBlocks& blocks, const std::vector<double>& rho, int A) {
    const std::vector<double> per_period = expanded_loadings(blocks, rho);
    const int T = static_cast<int>(per_period.size());
    Eigen::VectorXd d(static_cast<Eigen::Index>(T) * A);
    for (int t = 0; t < T; ++t) d.segment(static_cast<Eigen::Index>(t) * A, A).setConstant(per_period[t]);
    return d;
}

StructureMatrix build_qx(const ScalingBlocks& blocks, const std::vector<double>& rho, double tau_chi, double tau_eps,
                         const StructureMatrix& q_chi) {
    if (!(tau_chi > 0.0) || !(tau_eps > 0.0)) throw std::invalid_argument("build_qx: precisions must be positive");
    const int n = q_chi.dim();
    const int T = blocks.periods();
    if (T <= 0 || n % T != 0) throw std::invalid_argument("build_qx: Q_chi dimension is not a multiple of T");
    const Eigen::VectorXd z3 = build_z3(blocks, rho, n / T);
    const Eigen::VectorXd d = z3.cwiseInverse();
    const Eigen::VectorXd d2 = d.cwiseProduct(d);

    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(q_chi.entries().nonZeros()) * 4);
    const SpMat& q = q_chi.entries();
    for (int j = 0; j < q.outerSize(); ++j) {
        for (SpMat::InnerIterator it(q, j); it; ++it) {
            const int i = static_cast<int>(it.row());
            const double v = it.value();
            t.emplace_back(i, j, tau_chi * d[i] * v * d[j] + tau_eps * d2[i] * v * d2[j]);
            t.emplace_back(i, n + j, -tau_eps * d2[i] * v);
            t.emplace_back(n + i, j, -tau_eps * v * d2[j]);
            t.emplace_back(n + i, n + j, tau_eps * v);
        }
    }
    SpMat qx(2 * n, 2 * n);
    qx.setFromTriplets(t.begin(), t.end());

    // Kernel: (Z3 k, Z3^{-1} k) and (0, k) for every kernel vector k of Q_chi.
    const Eigen::MatrixXd& k = q_chi.kernel();
    Eigen::MatrixXd ker = Eigen::MatrixXd::Zero(2 * n, 2 * k.cols());
    for (Eigen::Index c = 0; c < k.cols(); ++c) {
        ker.col(2 * c).head(n) = z3.cwiseProduct(k.col(c));
        ker.col(2 * c).tail(n) = d.cwiseProduct(k.col(c));
        ker.col(2 * c + 1).tail(n) = k.col(c);
    }
    return StructureMatrix(std::move(qx), 2 * q_chi.rank(), std::move(ker));
}

ConstraintSet constraints_for(const ModelSpec& spec, const LatentLayout& lay, const StructureMatrix& r_kappa,
                              const StructureMatrix& r_gamma, const StructureMatrix& q_chi) {
    const int A = lay.A;
    const int T = lay.T;
    std::vector<std::pair<int, Eigen::MatrixXd>> blocks;
    const Eigen::MatrixXd ones_a = Eigen::MatrixXd::Ones(1, A);

    blocks.emplace_back(lay.kappa, r_kappa.kernel().transpose());
    if (lay.u >= 0) blocks.emplace_back(lay.u, ones_a);
    if (lay.v >= 0) blocks.emplace_back(lay.v, ones_a);
    if (lay.w >= 0) {
        blocks.emplace_back(lay.w, ones_a);
        blocks.emplace_back(lay.w + A, ones_a);
    }
    blocks.emplace_back(lay.gamma_i, r_gamma.kernel().transpose());
    blocks.emplace_back(lay.gamma_m, r_gamma.kernel().transpose());

    // Type I has no kernel; a global sum row keeps it separable from the intercepts.
    // In the copy construction z* = D^2 z + eps is tied to z at precision
    // tau_eps, so a second sum row on z* would silently constrain z twice.
    const Eigen::MatrixXd inter = q_chi.nullity() > 0 ? Eigen::MatrixXd(q_chi.kernel().transpose())
                                                      : Eigen::MatrixXd(Eigen::MatrixXd::Ones(1, T * A));
    blocks.emplace_back(lay.inter_i, inter);
    if (spec.family == Family::Independent || q_chi.nullity() > 0) blocks.emplace_back(lay.inter_m, inter);
    return ConstraintSet::stack(lay.total, blocks);
}

double log_prior(const HyperParams& h, const ModelSpec& spec) {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!positive(h.tau_kappa) || !positive(h.tau_gamma_i) || !positive(h.tau_gamma_m) || !positive(h.delta)) {
        throw std::invalid_argument("log_prior: parameters must be positive");
    }
    for (double r : h.rho) {
        if (!positive(r)) throw std::invalid_argument("log_prior: parameters must be positive");
    }
    return log_prior_internal(to_internal(h, spec), spec);
}

double log_prior_internal(const Eigen::VectorXd& theta, const ModelSpec& spec) {
    const auto names = hyper_names(spec);
    if (theta.size() != static_cast<Eigen::Index>(names.size())) throw std::invalid_argument("theta length mismatch");
    const auto& p = spec.priors;
    double lp = 0.0;
    for (std::size_t k = 0; k < names.size(); ++k) {
        const bool scaling = names[k] == "log_delta" || names[k].rfind("log_rho_", 0) == 0;
        lp += scaling ? gamma_log_prior(theta[k], p.scaling_shape, p.scaling_rate)
                      : uniform_sigma_log_prior(theta[k], p.sigma_upper);
        if (lp == kNegInf) return lp;
    }
    return lp;
}

double log_intercept_prior(double alpha_i, double alpha_m, const PriorSettings& p) {
    const double prec = p.intercept_precision;
    return std::log(prec) - std::log(2.0 * std::numbers::pi) - 0.5 * prec * (alpha_i * alpha_i + alpha_m * alpha_m);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> linear_predictor(const ModelSpec& spec, const LatentLayout& lay,
                                                             const Eigen::VectorXd& latent, const HyperParams& h) {
    if (latent.size() != lay.total) throw std::invalid_argument("linear_predictor: latent does not match layout");
    const int A = lay.A;
    const int T = lay.T;
    Eigen::VectorXd eta_i(lay.cells()), eta_m(lay.cells());
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < A; ++i) {
            const int c = t * A + i;
            const double kappa = latent[lay.kappa + i];
            double ei = latent[lay.alpha] + h.delta * kappa + latent[lay.gamma_i + t] + latent[lay.inter_i + c];
            double em = latent[lay.alpha + 1] + kappa / h.delta + latent[lay.gamma_m + t] + latent[lay.inter_m + c];
            switch (spec.extras) {
                case SpatialExtras::None: break;
                case SpatialExtras::MortalityU: em += latent[lay.u + i]; break;
                case SpatialExtras::SharedVarianceW:
                    ei += latent[lay.w + i];
                    em += latent[lay.w + A + i];
                    break;
                case SpatialExtras::SeparateUV:
                    ei += latent[lay.v + i];
                    em += latent[lay.u + i];
                    break;
            }
            eta_i[c] = ei;
            eta_m[c] = em;
        }
    }
    return {eta_i, eta_m};
}

std::vector<double> effective_loadings(const std::vector<double>& rho) {
    std::vector<double> out(rho.begin(), rho.end());
    for (double r : rho) out.push_back(1.0 / r);
    return out;
}

bool check_scaling_identifiability(const std::vector<double>& rho, double* residual) {
    double s = 0.0;
    for (double r : rho) {
        if (!(r > 0.0)) throw std::invalid_argument("scaling parameters must be positive");
        s += std::log(r) + std::log(1.0 / r);
    }
    if (residual) *residual = s;
    return std::abs(s) <= 1e-12;
}

// ---------------------------------------------------------------------------

JointModel::JointModel(ModelSpec spec, const AdjacencyGraph& graph, int T)
    : spec_(std::move(spec)), layout_(stshared::layout(spec_, graph.n_areas(), T)), names_(stshared::hyper_names(spec_)) {
    if (spec_.family == Family::SharedSingle && spec_.blocks.count() != 1) {
        throw std::invalid_argument("shared_single requires exactly one scaling block");
    }
    r_kappa_ = icar_structure(graph);
    r_gamma_ = spec_.temporal == TemporalPrior::RW1 ? rw1_structure(T) : rw2_structure(T);
    q_chi_ = interaction_structure(spec_.interaction, r_gamma_, r_kappa_);
    constraints_ = constraints_for(spec_, layout_, r_kappa_, r_gamma_, q_chi_);
    // Only kernel directions need the C'C augmentation; the remaining rows
    // (sum-to-zero on proper blocks) are enforced by kriging alone and would
    // otherwise add dense blocks to the factor.
    std::vector<std::pair<int, Eigen::MatrixXd>> kernel_rows;
    kernel_rows.emplace_back(layout_.kappa, r_kappa_.kernel().transpose());
    kernel_rows.emplace_back(layout_.gamma_i, r_gamma_.kernel().transpose());
    kernel_rows.emplace_back(layout_.gamma_m, r_gamma_.kernel().transpose());
    gram_main_ = ConstraintSet::stack(layout_.total, kernel_rows).gram(1.0);
    if (q_chi_.nullity() > 0) {
        kernel_rows.emplace_back(layout_.inter_i, q_chi_.kernel().transpose());
        kernel_rows.emplace_back(layout_.inter_m, q_chi_.kernel().transpose());
    }
    gram_ = ConstraintSet::stack(layout_.total, kernel_rows).gram(1.0);

    log_gdet_kappa_ = log_generalized_determinant(r_kappa_);
    log_gdet_gamma_ = log_generalized_determinant(r_gamma_);
    const double rk = r_kappa_.rank();
    const double rg = r_gamma_.rank();
    switch (spec_.interaction) {
        case InteractionType::I: log_gdet_chi_ = 0.0; break;
        case InteractionType::II: log_gdet_chi_ = A() * log_gdet_gamma_; break;
        case InteractionType::III: log_gdet_chi_ = T * log_gdet_kappa_; break;
        case InteractionType::IV: log_gdet_chi_ = rk * log_gdet_gamma_ + rg * log_gdet_kappa_; break;
    }
    if (!constraints_.empty()) {
        const Eigen::MatrixXd cct = constraints_.rows() * constraints_.rows().transpose();
        const Eigen::LLT<Eigen::MatrixXd> llt(cct);
        log_det_cct_ = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    }

    const HyperParams h0 = hyper(initial_theta());
    const SpMat a = design(h0);
    const SpMat base = prior_precision(h0) + SpMat(a.transpose() * a);
    ordering_ = Ordering::amd(SpMat(base + gram_));
    ordering_main_ = Ordering::amd(SpMat(base + gram_main_));
}

double JointModel::log_det_prior_subspace(const HyperParams& h) const {
    const auto& l = layout_;
    const int A = l.A;
    const double n = l.cells();
    const double rk = r_kappa_.rank();
    const double rg = r_gamma_.rank();
    const double rq = q_chi_.rank();
    const bool type_one = spec_.interaction == InteractionType::I;
    double ld = log_det_cct_ + 2.0 * std::log(spec_.priors.intercept_precision);
    ld += rk * std::log(h.tau_kappa) + log_gdet_kappa_;
    ld += rg * (std::log(h.tau_gamma_i) + std::log(h.tau_gamma_m)) + 2.0 * log_gdet_gamma_;
    if (l.u >= 0) ld += (A - 1) * std::log(h.tau_u);
    if (l.v >= 0) ld += (A - 1) * std::log(h.tau_v);
    if (l.w >= 0) ld += 2.0 * (A - 1) * std::log(h.tau_w);

    if (spec_.family == Family::Independent) {
        // tau Q on range(Q), or tau I on the sum-to-zero subspace for Type I.
        const double r = type_one ? n - 1.0 : rq;
        ld += r * (std::log(h.tau_chi_i) + std::log(h.tau_chi_m)) + 2.0 * log_gdet_chi_;
        return ld;
    }

    // Copy field with D = Z3^{-1}: Q_x = L' diag(tau_chi DQD, tau_eps Q) L with
    // L unit lower-triangular, so the Schur complement on the constrained
    // subspace reduces to tau_chi (V'DV) Lambda (V'DV).
    const Eigen::VectorXd z3 = build_z3(spec_.blocks, h.rho, A);
    const Eigen::ArrayXd d = z3.cwiseInverse().array();
    const double sum_log_d = d.log().sum();
    if (type_one) {
        // Only z carries the sum row; u'D^{-2}u with u = 1/sqrt(n).
        ld += n * std::log(h.tau_eps) + (n - 1.0) * std::log(h.tau_chi) + 2.0 * sum_log_d +
              std::log((1.0 / d.square()).mean());
        return ld;
    }
    const Eigen::MatrixXd& k = q_chi_.null_basis();
    const Eigen::MatrixXd kdk = k.transpose() * (1.0 / d).matrix().asDiagonal() * k;
    const Eigen::LLT<Eigen::MatrixXd> llt(kdk);
    const double log_det_kdk = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    ld += rq * (std::log(h.tau_eps) + std::log(h.tau_chi)) + 2.0 * log_gdet_chi_ + 2.0 * (sum_log_d + log_det_kdk);
    return ld;
}

HyperParams JointModel::hyper(const Eigen::VectorXd& theta) const { return from_internal(theta, spec_); }

SpMat JointModel::prior_precision(const HyperParams& h) const {
    const auto& l = layout_;
    const int A = l.A;
    const int T = l.T;
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(q_chi_.entries().nonZeros()) * 4 + 16 * static_cast<std::size_t>(l.total));
    add_diagonal(t, l.alpha, 2, spec_.priors.intercept_precision);
    add_scaled(t, r_kappa_.entries(), h.tau_kappa, l.kappa);
    if (l.u >= 0) add_diagonal(t, l.u, A, h.tau_u);
    if (l.v >= 0) add_diagonal(t, l.v, A, h.tau_v);
    if (l.w >= 0) add_diagonal(t, l.w, 2 * A, h.tau_w);
    add_scaled(t, r_gamma_.entries(), h.tau_gamma_i, l.gamma_i);
    add_scaled(t, r_gamma_.entries(), h.tau_gamma_m, l.gamma_m);
    if (shared(spec_.family)) {
        const StructureMatrix qx = build_qx(spec_.blocks, h.rho, h.tau_chi, h.tau_eps, q_chi_);
        add_scaled(t, qx.entries(), 1.0, l.inter_i);
    } else {
        add_scaled(t, q_chi_.entries(), h.tau_chi_i, l.inter_i);
        add_scaled(t, q_chi_.entries(), h.tau_chi_m, l.inter_m);
    }
    (void)T;
    SpMat q(l.total, l.total);
    q.setFromTriplets(t.begin(), t.end());
    return q;
}

SpMat JointModel::design(const HyperParams& h) const {
    const auto& l = layout_;
    const int A = l.A;
    const int n = l.cells();
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(n) * 12);
    for (int c = 0; c < n; ++c) {
        const int i = c % A;
        const int tt = c / A;
        const int ri = c;
        const int rm = n + c;
        t.emplace_back(ri, l.alpha, 1.0);
        t.emplace_back(rm, l.alpha + 1, 1.0);
        t.emplace_back(ri, l.kappa + i, h.delta);
        t.emplace_back(rm, l.kappa + i, 1.0 / h.delta);
        switch (spec_.extras) {
            case SpatialExtras::None: break;
            case SpatialExtras::MortalityU: t.emplace_back(rm, l.u + i, 1.0); break;
            case SpatialExtras::SharedVarianceW:
                t.emplace_back(ri, l.w + i, 1.0);
                t.emplace_back(rm, l.w + A + i, 1.0);
                break;
            case SpatialExtras::SeparateUV:
                t.emplace_back(ri, l.v + i, 1.0);
                t.emplace_back(rm, l.u + i, 1.0);
                break;
        }
        t.emplace_back(ri, l.gamma_i + tt, 1.0);
        t.emplace_back(rm, l.gamma_m + tt, 1.0);
        t.emplace_back(ri, l.inter_i + c, 1.0);
        t.emplace_back(rm, l.inter_m + c, 1.0);
    }
    SpMat a(2 * n, l.total);
    a.setFromTriplets(t.begin(), t.end());
    return a;
}

Eigen::VectorXd JointModel::initial_theta() const {
    Eigen::VectorXd th(n_hyper());
    for (int k = 0; k < n_hyper(); ++k) {
        const bool scaling = names_[k] == "log_delta" || names_[k].rfind("log_rho_", 0) == 0;
        th[k] = scaling ? 0.0 : std::log(50.0);
    }
    return th;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> JointModel::theta_bounds() const {
    Eigen::VectorXd lo(n_hyper()), hi(n_hyper());
    const double floor = -2.0 * std::log(spec_.priors.sigma_upper);
    for (int k = 0; k < n_hyper(); ++k) {
        const bool scaling = names_[k] == "log_delta" || names_[k].rfind("log_rho_", 0) == 0;
        lo[k] = scaling ? -3.0 : floor;
        hi[k] = scaling ? 3.0 : 14.0;
    }
    return {lo, hi};
}

}  // namespace stshared
