#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "tprn/linalg.hpp"
#include "tprn/rng.hpp"

namespace tprn {

// Cell dimensions and switches. Defaults are the published configuration:
// 100 symbols, 20 roles, embedding size 10 for both, word vectors of 100.
struct Hyper {
    int nSymbols = 100;
    int nRoles = 20;
    int dSymbols = 10;
    int dRoles = 10;
    int dWord = 100;
    bool gateEnabled = false;
    // When true the recurrent feedback carries the gated output instead of
    // the raw bound tensor.
    bool gatedFeedback = false;

    int boundSize() const { return dSymbols * dRoles; }
    void validate() const;
};

struct GateParams {
    Matrix inputWeight;      // (dSymbols*dRoles) x dWord
    Matrix recurrentWeight;  // (dSymbols*dRoles) x (dSymbols*dRoles)
    Vector bias;             // dSymbols*dRoles
};

// All learned tensors of one recurrent cell. Symbol and role embeddings are
// stored column-per-item.
struct CellParams {
    Matrix symbolEmbeddings;  // dSymbols x nSymbols
    Matrix roleEmbeddings;    // dRoles x nRoles
    Matrix symbolInput;       // nSymbols x dWord
    Matrix symbolRecurrent;   // nSymbols x (dSymbols*dRoles)
    Vector symbolBias;        // nSymbols
    Matrix roleInput;         // nRoles x dWord
    Matrix roleRecurrent;     // nRoles x (dSymbols*dRoles)
    Vector roleBias;          // nRoles
    std::optional<GateParams> gate;

    // Uniform [-a, a] with a = sqrt(6/(fanIn+fanOut)) per matrix, zero
    // biases. Gate block is created iff h.gateEnabled.
    static CellParams init(const Hyper& h, Rng& rng);
    static CellParams zerosLike(const CellParams& p);
    void validate(const Hyper& h) const;
};

// Per-token record: attention vectors, binding matrix, bound tensor and the
// (possibly gated) output. The unit of all downstream interpretation.
struct StepTrace {
    int tokenIndex = 0;
    Vector symbolAttention;  // nSymbols, each component in (0,1)
    Vector roleAttention;    // nRoles
    Matrix binding;          // nSymbols x nRoles, outer(symbolAttention, roleAttention)
    Matrix bound;            // dSymbols x dRoles
    Vector output;           // dSymbols*dRoles
};

enum class Direction { Forward, Backward };

struct SequenceOutput {
    std::vector<Vector> perToken;  // concatenated [forward ; backward] outputs
    std::vector<StepTrace> tracesFwd;
    std::vector<StepTrace> tracesBwd;
};

// attention recurrences: a = sigmoid(W_in w + W_rec vec(vPrev) + b)
std::pair<Vector, Vector> attend(const Hyper& h, const CellParams& p,
                                 const Vector& word, const Matrix& boundPrev);

Matrix bind(const Vector& symbolAttention, const Vector& roleAttention);

// bound tensor v = S B R^T
Matrix embed(const CellParams& p, const Matrix& binding);

// g = sigmoid(Wg w + Ug vec(vPrev) + bg); out = g .* vec(v)
Vector gateOutput(const Hyper& h, const CellParams& p, const Vector& word,
                  const Matrix& boundPrev, const Matrix& bound);

StepTrace step(const Hyper& h, const CellParams& p, const Vector& word,
               const Matrix& boundPrev, int tokenIndex = 0);

// Traces are indexed by token position regardless of direction; Backward
// visits positions right to left. The initial bound tensor is zero.
std::vector<StepTrace> runSequence(const Hyper& h, const CellParams& p,
                                   const std::vector<Vector>& tokens, Direction dir);

SequenceOutput runBidirectional(const Hyper& h, const CellParams& pFwd,
                                const CellParams& pBwd, const std::vector<Vector>& tokens);

}  // namespace tprn
