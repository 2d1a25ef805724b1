#include "tprn/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tprn {

double quantizationPenalty(const Vector& a) {
    double bin = 0.0;
    double sq = 0.0;
    for (double ai : a) {
        const double one = 1.0 - ai;
        bin += ai * ai * one * one;
        sq += ai * ai;
    }
    const double unit = sq - 1.0;
    return bin + unit * unit;
}

Vector quantizationPenaltyGrad(const Vector& a) {
    double sq = 0.0;
    for (double ai : a) sq += ai * ai;
    const double unit = sq - 1.0;
    Vector g(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ai = a[i];
        g[i] = 2.0 * ai * (1.0 - ai) * (1.0 - 2.0 * ai) + 4.0 * ai * unit;
    }
    return g;
}

double stepQuantizationPenalty(const Vector& symbolAttention, const Vector& roleAttention) {
    return quantizationPenalty(symbolAttention) + quantizationPenalty(roleAttention);
}

double crossEntropy(const Vector& logits, int target) {
    if (target < 0 || target >= static_cast<int>(logits.size()))
        throw InputError("crossEntropy: target " + std::to_string(target) + " out of range 0.." +
                         std::to_string(logits.size() - 1));
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    return std::log(z) + m - logits[static_cast<std::size_t>(target)];
}

Vector crossEntropyGrad(const Vector& logits, int target) {
    if (target < 0 || target >= static_cast<int>(logits.size()))
        throw InputError("crossEntropyGrad: target out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    Vector g(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        g[i] = std::exp(logits[i] - m);
        z += g[i];
    }
    for (double& gi : g) gi /= z;
    g[static_cast<std::size_t>(target)] -= 1.0;
    return g;
}

LossBreakdown totalObjective(const std::vector<SequenceOutput>& batchTraces,
                             const std::vector<double>& taskLosses,
                             const ObjectiveConfig& cfg) {
    if (batchTraces.empty() || taskLosses.empty())
        throw DegenerateInputError("totalObjective: empty batch");
    double ce = 0.0;
    for (double l : taskLosses) ce += l;
    ce /= static_cast<double>(taskLosses.size());

    double q = 0.0;
    std::size_t steps = 0;
    for (const auto& seq : batchTraces) {
        for (const auto& t : seq.tracesFwd) {
            q += stepQuantizationPenalty(t.symbolAttention, t.roleAttention);
            ++steps;
        }
        for (const auto& t : seq.tracesBwd) {
            q += stepQuantizationPenalty(t.symbolAttention, t.roleAttention);
            ++steps;
        }
    }
    if (cfg.qAggregation == QAggregation::Mean && steps > 0) q /= static_cast<double>(steps);

    LossBreakdown out;
    out.crossEntropy = ce;
    out.quantization = q;
    out.total = ce + cfg.cQ * q;
    return out;
}

void OnehotnessAccumulator::add(const StepTrace& t) {
    sumMaxSymbol_ += *std::max_element(t.symbolAttention.begin(), t.symbolAttention.end());
    sumMaxRole_ += *std::max_element(t.roleAttention.begin(), t.roleAttention.end());
    sumQ_ += stepQuantizationPenalty(t.symbolAttention, t.roleAttention);
    ++steps_;
}

Onehotness OnehotnessAccumulator::finish() const {
    if (steps_ == 0)
        throw DegenerateInputError("onehotness: no traces");
    const double n = static_cast<double>(steps_);
    Onehotness o;
    o.meanMaxSymbol = sumMaxSymbol_ / n;
    o.meanMaxRole = sumMaxRole_ / n;
    // each step contributes its symbol vector and its role vector as samples
    o.meanMaxComponent = (sumMaxSymbol_ + sumMaxRole_) / (2.0 * n);
    o.meanQ = sumQ_ / n;
    return o;
}

Onehotness onehotness(const std::vector<StepTrace>& traces) {
    OnehotnessAccumulator acc;
    for (const auto& t : traces) acc.add(t);
    return acc.finish();
}

}  // namespace tprn
