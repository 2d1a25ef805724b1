#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tprn/data.hpp"
#include "tprn/model.hpp"
#include "tprn/objective.hpp"

namespace tprn {

// One embedded training sequence with its per-token targets.
struct TokenSequence {
    std::vector<Vector> words;
    std::vector<int> labels;     // token classification targets
    int spanStart = -1;          // span-pointing targets
    int spanEnd = -1;
};

enum class LabelKind { Class, Role, Joint };

int labelCount(LabelKind kind, int classCount, int roleCount);

// Embeds a corpus and attaches targets. Joint labels are classId*roleCount
// + roleId, which forces the representation to carry both facts.
std::vector<TokenSequence> buildSequences(const std::vector<Example>& corpus,
                                          const EmbeddingTable& embeddings, LabelKind kind,
                                          int classCount, int roleCount);

struct ForwardStats {
    LossBreakdown loss;
    double accuracy = 0.0;
    std::size_t tokens = 0;
    Onehotness attention;
};

ForwardStats forwardLoss(const ModelParams& params, const std::vector<TokenSequence>& batch,
                         const ObjectiveConfig& cfg);

struct BackwardResult {
    LossBreakdown loss;
    ModelGrads grads;
    double accuracy = 0.0;
    std::size_t tokens = 0;
    Onehotness attention;
};

// Reverse-mode gradients of the full objective: through the recurrence in
// both directions, the bilinear binding, the quantization terms, the gate
// and the task head. Throws NumericalError naming the parameter group if a
// gradient comes out non-finite.
BackwardResult backward(const ModelParams& params, const std::vector<TokenSequence>& batch,
                        const ObjectiveConfig& cfg);

struct FdOptions {
    std::size_t fullSweepLimit = 1000;  // groups up to this size get every coordinate
    std::size_t sampleSize = 200;       // larger groups get a seeded sample this big
    std::uint64_t seed = 0;
    bool corruptAnalytic = false;  // test hook: damage one analytic gradient entry
};

struct FdReport {
    double maxRelErr = 0.0;
    std::string worstParam;
    std::size_t coordsChecked = 0;
};

// Central differences (f(x+h)-f(x-h))/2h against the analytic gradient,
// relative error |a-n| / max(|a|,|n|,1e-8). The numeric side evaluates the
// objective in extended precision; with a double-precision f, coordinates
// whose true gradient sits just above the 1e-8 floor would drown in
// cancellation noise at h = 1e-5.
FdReport fdCheck(ModelParams& params, const std::vector<TokenSequence>& batch,
                 const ObjectiveConfig& cfg, double h, const FdOptions& opts = {});

// Generic core of the checker: works on any scalar function of flat
// parameter views, given matching analytic gradients.
FdReport fdCheckRefs(const std::function<long double()>& lossFn,
                     const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                     double h, const FdOptions& opts = {});

// Total objective evaluated in long double end to end, for the checker.
long double preciseLoss(const ModelParams& params, const std::vector<TokenSequence>& batch,
                        const ObjectiveConfig& cfg);

struct AdaDeltaState {
    double rho = 0.95;
    double epsilon = 1e-6;
    std::vector<Vector> accumGradSq;    // aligned with paramRefs order
    std::vector<Vector> accumUpdateSq;

    static AdaDeltaState zerosLike(const std::vector<ParamRef>& refs, double rho = 0.95,
                                   double epsilon = 1e-6);
};

// Eg <- rho Eg + (1-rho) g^2; d = -sqrt(Eu+eps)/sqrt(Eg+eps) * g;
// Eu <- rho Eu + (1-rho) d^2; theta <- theta + d.
void adadeltaUpdate(AdaDeltaState& state, const std::vector<ParamRef>& params,
                    const std::vector<ParamRef>& grads);

struct TrainConfig {
    int epochs = 12;
    int batchSize = 32;
    std::uint64_t seed = 0;
    ObjectiveConfig objective;
    double rho = 0.95;
    double epsilon = 1e-6;
    double clipNorm = 0.0;  // 0 disables clipping
    int startEpoch = 0;     // resumed runs continue numbering from here

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double crossEntropy = 0.0;
    double quantization = 0.0;
    double meanMaxComponent = 0.0;
    double accuracy = 0.0;
};

using MetricsLog = std::vector<EpochMetrics>;

struct TrainResult {
    MetricsLog log;
    bool aborted = false;       // divergence: params rolled back to last good epoch
    int epochsCompleted = 0;
    AdaDeltaState optimizer;
};

// Seeded shuffled minibatches; deterministic given (config, dataset,
// params). On a non-finite loss the last epoch-boundary snapshot is
// restored and the run reports aborted.
TrainResult trainLoop(const TrainConfig& cfg, const std::vector<TokenSequence>& dataset,
                      ModelParams& params, const AdaDeltaState* resumeState = nullptr);

void writeMetricsCsv(const MetricsLog& log, const std::string& path);
MetricsLog readMetricsCsv(const std::string& path);

}  // namespace tprn
