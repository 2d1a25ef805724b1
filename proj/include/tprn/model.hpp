#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tprn/cell.hpp"
#include "tprn/objective.hpp"

namespace tprn {

// Linear token classifier over the concatenated [forward ; backward] output.
struct ClassifierHead {
    Matrix weight;  // numLabels x 2*dSymbols*dRoles
    Vector bias;    // numLabels
};

// Toy span head: start/end logits are diagonal bilinear forms between each
// token output and the sequence summary vector (mean of token outputs).
struct SpanHead {
    Vector startWeight;  // 2*dSymbols*dRoles
    Vector endWeight;
};

// Two independent cells (one per direction; weights are shared across the
// sequences fed to a direction, not across directions) plus the task head.
struct ModelParams {
    Hyper hyper;
    CellParams fwd;
    CellParams bwd;
    std::optional<ClassifierHead> classifier;
    std::optional<SpanHead> span;
    int numLabels = 0;

    static ModelParams init(const Hyper& h, TaskKind task, int numLabels, std::uint64_t seed);
    void validate() const;
};

struct ModelGrads {
    CellParams fwd;
    CellParams bwd;
    std::optional<ClassifierHead> classifier;
    std::optional<SpanHead> span;

    static ModelGrads zerosLike(const ModelParams& p);
};

// Flat view over every scalar parameter, in a fixed documented order. The
// optimizer, the finite-difference checker and the checkpoint writer all
// iterate this list, so the order is part of the persistence contract.
struct ParamRef {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
};

std::vector<ParamRef> paramRefs(ModelParams& p);
std::vector<ParamRef> gradRefs(ModelGrads& g);

// logits for one token under the classifier head
Vector classify(const ModelParams& p, const Vector& tokenOutput);

}  // namespace tprn
