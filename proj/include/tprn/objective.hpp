#pragma once

#include <vector>

#include "tprn/cell.hpp"
#include "tprn/linalg.hpp"

namespace tprn {

enum class TaskKind { TokenClassification, SpanPointing };
enum class QAggregation { Mean, Sum };

struct ObjectiveConfig {
    double cQ = 1e-5;
    TaskKind taskKind = TaskKind::TokenClassification;
    QAggregation qAggregation = QAggregation::Mean;
};

struct LossBreakdown {
    double crossEntropy = 0.0;  // mean task loss
    double quantization = 0.0;  // aggregated attention penalty, pre-weight
    double total = 0.0;         // crossEntropy + cQ * quantization
};

// Penalty sum_i a_i^2 (1-a_i)^2 + (sum_i a_i^2 - 1)^2. Nonnegative, zero
// exactly on 1-hot vectors.
double quantizationPenalty(const Vector& a);

// derivative of quantizationPenalty w.r.t. a
Vector quantizationPenaltyGrad(const Vector& a);

// penalty of one step: symbol term + role term
double stepQuantizationPenalty(const Vector& symbolAttention, const Vector& roleAttention);

// -log softmax(logits)[target], max-subtraction stabilized
double crossEntropy(const Vector& logits, int target);

// softmax(logits) - onehot(target)
Vector crossEntropyGrad(const Vector& logits, int target);

// crossEntropy = mean of taskLosses; quantization = mean (or sum) of the
// per-step penalties over all traces in the batch, both directions.
LossBreakdown totalObjective(const std::vector<SequenceOutput>& batchTraces,
                             const std::vector<double>& taskLosses,
                             const ObjectiveConfig& cfg);

struct Onehotness {
    double meanMaxComponent = 0.0;  // pooled over symbol and role vectors
    double meanQ = 0.0;             // mean per-step penalty
    double meanMaxSymbol = 0.0;
    double meanMaxRole = 0.0;
};

// Streaming aggregation so callers can mix traces from many sequences
// without holding them all.
class OnehotnessAccumulator {
public:
    void add(const StepTrace& t);
    Onehotness finish() const;  // throws DegenerateInputError when empty
    std::size_t steps() const { return steps_; }

private:
    std::size_t steps_ = 0;
    double sumMaxSymbol_ = 0.0;
    double sumMaxRole_ = 0.0;
    double sumQ_ = 0.0;
};

Onehotness onehotness(const std::vector<StepTrace>& traces);

}  // namespace tprn
