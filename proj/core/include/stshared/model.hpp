#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stshared/gmrf.hpp"
#include "stshared/graph.hpp"
#include "stshared/sparse_factor.hpp"
#include "stshared/structure.hpp"

namespace stshared {

/// How the two outcomes' space-time interactions relate.
enum class Family {
    Independent,     ///< separate chi_I, chi_M
    SharedSingle,    ///< rho * chi and chi / rho, one scaling
    SharedFlexible,  ///< rho_t * chi and chi / rho_t, block-wise scalings
};

/// Unstructured spatial terms added on top of the shared spatial component.
enum class SpatialExtras {
    None,             ///< x.1
    MortalityU,       ///< x.2: u_i on mortality
    SharedVarianceW,  ///< x.3: w_iI, w_iM with a common precision
    SeparateUV,       ///< x.4: v_i on incidence, u_i on mortality
};

enum class TemporalPrior { RW1, RW2 };

std::string to_string(Family f);
std::string to_string(SpatialExtras e);
std::string to_string(TemporalPrior p);
Family family_from_string(const std::string& s);
SpatialExtras extras_from_string(const std::string& s);
TemporalPrior temporal_from_string(const std::string& s);

/// Number of consecutive periods sharing each scaling parameter.
struct ScalingBlocks {
    std::vector<int> sizes;

    static ScalingBlocks single(int T) { return ScalingBlocks{{T}}; }
    /// l blocks of near-equal length (earlier blocks take the remainder).
    static ScalingBlocks even(int T, int l);

    int count() const { return static_cast<int>(sizes.size()); }
    int periods() const;
    /// Block index of each period.
    std::vector<int> block_of_period() const;
    /// Throws unless 1 <= l <= T, all sizes positive and sum == T.
    void validate(int T) const;

    bool operator==(const ScalingBlocks&) const = default;
};

/// Prior constants. Precisions get a uniform prior on the standard deviation
/// over (0, sigma_upper]; delta and every rho_k get Gamma(shape, rate).
struct PriorSettings {
    double sigma_upper = 1e3;
    double intercept_precision = 1e-3;
    double scaling_shape = 10.0;
    double scaling_rate = 10.0;
    double log_tau_eps = 15.0;

    bool operator==(const PriorSettings&) const = default;
};

struct ModelSpec {
    Family family = Family::Independent;
    InteractionType interaction = InteractionType::I;
    ScalingBlocks blocks{{1}};
    SpatialExtras extras = SpatialExtras::None;
    TemporalPrior temporal = TemporalPrior::RW1;
    PriorSettings priors;

    /// Number of free scaling parameters rho (0 for the independent family).
    int n_scalings() const;
    /// Short label in the x.y[a|b|c] scheme, e.g. "1.1", "3.2c".
    std::string label() const;

    /// Parses "1.k" (independent), "2[.k]" (single shared), "3[.k]" (flexible,
    /// three near-equal blocks), "3.ka" (l = 1), "3.kb" (l = T). "3.kc" needs
    /// explicit blocks and is rejected here.
    static ModelSpec from_label(const std::string& label, InteractionType interaction, int T);

    bool operator==(const ModelSpec&) const = default;
};

/// Structured-text (JSON) round trip. Keys: family, interaction, blocks,
/// spatial_extras, temporal_prior, priors{...}.
std::string to_config(const ModelSpec& spec);
ModelSpec model_spec_from_config(const std::string& text, int T);

/// Offsets of each block inside the stacked latent vector; -1 when absent.
struct LatentLayout {
    int A = 0, T = 0;
    int alpha = 0;        ///< alpha_I, alpha_M
    int kappa = -1;       ///< A
    int u = -1;           ///< A
    int v = -1;           ///< A
    int w = -1;           ///< 2A, (w_I, w_M)
    int gamma_i = -1;     ///< T
    int gamma_m = -1;     ///< T
    int inter_i = -1;     ///< TA: chi_I or z
    int inter_m = -1;     ///< TA: chi_M or z*
    int total = 0;

    int cells() const { return A * T; }
};

LatentLayout layout(const ModelSpec& spec, int A, int T);

/// Hyperparameters on their natural scale. Only those used by a spec are read.
struct HyperParams {
    double tau_kappa = 1.0;
    double tau_gamma_i = 1.0;
    double tau_gamma_m = 1.0;
    double tau_chi = 1.0;    ///< shared families
    double tau_chi_i = 1.0;  ///< independent family
    double tau_chi_m = 1.0;
    double delta = 1.0;
    std::vector<double> rho;
    double tau_u = 1.0;
    double tau_v = 1.0;
    double tau_w = 1.0;
    double tau_eps = std::exp(15.0);  ///< fixed, never optimized
};

/// Names of the free internal (log-scale) hyperparameters, in vector order.
std::vector<std::string> hyper_names(const ModelSpec& spec);
Eigen::VectorXd to_internal(const HyperParams& h, const ModelSpec& spec);
HyperParams from_internal(const Eigen::VectorXd& theta, const ModelSpec& spec);

/// Diagonal of Z3 = diag(expand(rho)) (x) I_A, area-fastest; length T*A.
Eigen::VectorXd build_z3(const ScalingBlocks& blocks, const std::vector<double>& rho, int A);

/// Precision of the extended copy field x = (z, z*), dimension 2TA:
///   [ tau_chi D Q D + tau_eps D^2 Q D^2    -tau_eps D^2 Q ]
///   [ -tau_eps Q D^2                        tau_eps Q     ]   with D = Z3^{-1}.
StructureMatrix build_qx(const ScalingBlocks& blocks, const std::vector<double>& rho, double tau_chi,
                         double tau_eps, const StructureMatrix& q_chi);

/// Identifiability constraints for every intrinsic or unstructured block.
ConstraintSet constraints_for(const ModelSpec& spec, const LatentLayout& lay, const StructureMatrix& r_kappa,
                              const StructureMatrix& r_gamma, const StructureMatrix& q_chi);

/// Log prior of the free hyperparameters in the internal log parameterization
/// (Jacobians included); -infinity outside the support.
double log_prior(const HyperParams& h, const ModelSpec& spec);
double log_prior_internal(const Eigen::VectorXd& theta, const ModelSpec& spec);

/// N(0, 1/intercept_precision) log density summed over both intercepts.
double log_intercept_prior(double alpha_i, double alpha_m, const PriorSettings& p);

/// (eta_I, eta_M), each of length T*A.
std::pair<Eigen::VectorXd, Eigen::VectorXd> linear_predictor(const ModelSpec& spec, const LatentLayout& lay,
                                                             const Eigen::VectorXd& latent, const HyperParams& h);

/// Sum over k of log(rho_k) + log(1/rho_k); true when it is within 1e-12 of 0.
bool check_scaling_identifiability(const std::vector<double>& rho, double* residual = nullptr);

/// Effective loadings of the interaction: (rho_1..rho_l, 1/rho_1..1/rho_l).
std::vector<double> effective_loadings(const std::vector<double>& rho);

/// A model specification bound to a graph and a number of periods.
///
/// Immutable after construction; every method is pure and thread-safe.
class JointModel {
public:
    JointModel(ModelSpec spec, const AdjacencyGraph& graph, int T);

    const ModelSpec& spec() const { return spec_; }
    const LatentLayout& layout() const { return layout_; }
    int A() const { return layout_.A; }
    int T() const { return layout_.T; }
    int dim() const { return layout_.total; }
    int n_hyper() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& hyper_names() const { return names_; }

    const StructureMatrix& r_kappa() const { return r_kappa_; }
    const StructureMatrix& r_gamma() const { return r_gamma_; }
    const StructureMatrix& q_chi() const { return q_chi_; }
    const ConstraintSet& constraints() const { return constraints_; }
    /// Unit-weight K'K over the rows spanning structure kernels (a subset of
    /// `constraints()`). Without `interaction`, only the main-effect kernels
    /// are included; the interaction kernels are then identified by the data.
    const SpMat& constraint_gram(bool interaction = true) const { return interaction ? gram_ : gram_main_; }
    /// Fill-reducing ordering matching the pattern of `constraint_gram(interaction)`.
    const Ordering& ordering(bool interaction = true) const { return interaction ? ordering_ : ordering_main_; }

    /// log det(V'QV) + log det(CC') for the prior precision Q, V an orthonormal
    /// basis of {C x = 0}; evaluated block-wise in closed form.
    double log_det_prior_subspace(const HyperParams& h) const;

    HyperParams hyper(const Eigen::VectorXd& theta) const;
    Eigen::VectorXd theta(const HyperParams& h) const { return to_internal(h, spec_); }

    SpMat prior_precision(const HyperParams& h) const;
    /// Linear-predictor design, 2TA x dim: rows [incidence cells; mortality cells].
    SpMat design(const HyperParams& h) const;
    double log_hyper_prior(const Eigen::VectorXd& theta) const { return log_prior_internal(theta, spec_); }

    /// Default starting point for hyperparameter optimization.
    Eigen::VectorXd initial_theta() const;
    /// Box on internal parameters; precisions bounded below by sigma_upper.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> theta_bounds() const;

private:
    ModelSpec spec_;
    LatentLayout layout_;
    std::vector<std::string> names_;
    StructureMatrix r_kappa_, r_gamma_, q_chi_;
    ConstraintSet constraints_;
    SpMat gram_, gram_main_;
    Ordering ordering_, ordering_main_;
    double log_gdet_kappa_ = 0.0, log_gdet_gamma_ = 0.0, log_gdet_chi_ = 0.0;
    double log_det_cct_ = 0.0;
};

}  // namespace stshared
