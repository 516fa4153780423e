#pragma once

// Central table of numeric tolerances and method defaults.

namespace hucd {

namespace tol {
/// Orthonormality checks (‖QᵀQ − I‖_max) and decomposition reconstruction.
inline constexpr double kOrthonormal = 1e-6;
/// Maximum absolute asymmetry accepted by eig_symmetric.
inline constexpr double kSymmetry = 1e-8;
/// Relative reconstruction bound for svd_thin / eig_symmetric.
inline constexpr double kReconstruction = 1e-6;
/// Slack when comparing a cumulative variance ratio against its threshold.
inline constexpr double kVarianceSlack = 1e-12;
}  // namespace tol

namespace defaults {
// Segments must cover at least 1% of the image to count as concept candidates.
inline constexpr double kMinAreaFrac = 0.01;
// Intrinsic dimension: smallest number of principal components keeping 80% variance.
inline constexpr double kVarThreshold = 0.8;
// Clusters need more than 50 member segments to become concepts.
inline constexpr int kMinClusterSize = 50;
// C-Deletion/C-Insertion only flip concepts present in >= 75% of images.
inline constexpr double kPresenceThreshold = 0.75;
// Masks larger than 25% of the image are eroded by the first conv kernel size.
inline constexpr double kShrinkAreaFrac = 0.25;

inline constexpr double kLambdaRel = 0.05;
inline constexpr double kAdmmRho = 1.0;
inline constexpr int kAdmmMaxIter = 5000;
inline constexpr double kAdmmTol = 1e-6;
// SSC columns are unit-norm; fixed-ρ ADMM can sit on a degenerate face near 1e-5 for thousands of iterations.
inline constexpr double kSscTol = 1e-4;
inline constexpr int kKMeansRestarts = 10;
inline constexpr int kKMeansMaxIter = 300;
inline constexpr double kCondCap = 1e6;
inline constexpr int kTopK = 5;
}  // namespace defaults

}  // namespace hucd
