#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ihanas/genome.hpp"

namespace ihanas {

/// Projection weights of one IHA attention block. Column blocks of Wq are
/// ordered by head; column blocks of Wk and Wv by KV group; row blocks of Wo
/// follow the head order of the concatenated outputs.
struct AttnWeights {
    Eigen::MatrixXd wq;  // d_model x (n_h * d_qk)
    Eigen::MatrixXd wk;  // d_model x (n_kv * d_qk)
    Eigen::MatrixXd wv;  // d_model x (n_kv * d_v)
    Eigen::MatrixXd wo;  // (n_h * d_v) x d_model

    static AttnWeights random(const LayerGene& gene, int d_model, std::uint64_t seed,
                              double scale = 0.5);
};

/// Per-head attention probabilities captured during a forward pass.
struct AttentionTrace {
    std::vector<Eigen::MatrixXd> probs;  // n_h matrices, T x T
};

/// Reference IHA attention: each head attends against its K/V group,
/// outputs are concatenated and projected back to d_model. Identity when
/// gene.attn == 0. Throws std::invalid_argument on shape mismatch.
Eigen::MatrixXd iha_forward(const Eigen::MatrixXd& x, const LayerGene& gene, const AttnWeights& w,
                            bool causal, AttentionTrace* trace = nullptr);

/// True iff every row of every matrix is a probability vector (entries >= 0,
/// row sum within 1e-9). With `causal`, entries above the diagonal must be 0.
bool attention_rows_stochastic(const std::vector<Eigen::MatrixXd>& probs, bool causal = false);

struct CheckResult {
    std::string name;
    bool passed;
    double max_error;
};

/// Randomized property suite for the reference kernel (shape, MHA and GQA
/// equivalence, head-permutation equivariance, identity gate, stochastic rows).
/// The comparison kernels are scalar loops independent of iha_forward.
std::vector<CheckResult> run_iha_checks(std::uint64_t seed, int draws = 100);

}  // namespace ihanas
