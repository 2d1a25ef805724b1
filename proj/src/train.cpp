#include "tprn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace tprn {

int labelCount(LabelKind kind, int classCount, int roleCount) {
    switch (kind) {
        case LabelKind::Class: return classCount;
        case LabelKind::Role: return roleCount;
        case LabelKind::Joint: return classCount * roleCount;
    }
    throw ConfigError("labelCount: unknown label kind");
}

std::vector<TokenSequence> buildSequences(const std::vector<Example>& corpus,
                                          const EmbeddingTable& embeddings, LabelKind kind,
                                          int classCount, int roleCount) {
    std::vector<TokenSequence> out;
    out.reserve(corpus.size());
    for (const auto& ex : corpus) {
        TokenSequence seq;
        for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
            seq.words.push_back(embeddings.row(ex.tokens[i]));
            const int c = ex.goldClasses[i];
            const int r = ex.goldRoles[i];
            if (c < 0 || c >= classCount || r < 0 || r >= roleCount)
                throw InputError("buildSequences: gold label out of range");
            int label = 0;
            switch (kind) {
                case LabelKind::Class: label = c; break;
                case LabelKind::Role: label = r; break;
                case LabelKind::Joint: label = c * roleCount + r; break;
            }
            seq.labels.push_back(label);
        }
        if (ex.span) {
            seq.spanStart = ex.span->first;
            seq.spanEnd = ex.span->second;
        }
        out.push_back(std::move(seq));
    }
    return out;
}

namespace {

// Per-token forward bookkeeping for one direction, indexed by position.
struct StepRecord {
    Vector xPrev;  // vectorized feedback entering this step
    Vector aS, aR;
    Vector s, r;   // S aS, R aR
    Matrix v;
    Vector gate;   // empty when gating is off
    Vector out;
};

std::size_t visitPos(Direction dir, std::size_t k, std::size_t n) {
    return dir == Direction::Forward ? k : n - 1 - k;
}

std::vector<StepRecord> runDir(const Hyper& h, const CellParams& p,
                               const std::vector<Vector>& words, Direction dir) {
    const std::size_t n = words.size();
    const std::size_t m = static_cast<std::size_t>(h.boundSize());
    std::vector<StepRecord> steps(n);
    Vector feedback(m, 0.0);  // vec of the zero initial bound tensor
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t pos = visitPos(dir, k, n);
        StepRecord st;
        st.xPrev = feedback;
        const Vector& w = words[pos];
        Vector zs = affine(p.symbolInput, w, p.symbolBias);
        addScaled(zs, matvec(p.symbolRecurrent, st.xPrev), 1.0);
        st.aS = sigmoid(zs);
        Vector zr = affine(p.roleInput, w, p.roleBias);
        addScaled(zr, matvec(p.roleRecurrent, st.xPrev), 1.0);
        st.aR = sigmoid(zr);
        st.s = matvec(p.symbolEmbeddings, st.aS);
        st.r = matvec(p.roleEmbeddings, st.aR);
        st.v = outer(st.s, st.r);
        if (h.gateEnabled) {
            Vector zg = affine(p.gate->inputWeight, w, p.gate->bias);
            addScaled(zg, matvec(p.gate->recurrentWeight, st.xPrev), 1.0);
            st.gate = sigmoid(zg);
            st.out = vectorize(st.v);
            for (std::size_t i = 0; i < m; ++i) st.out[i] *= st.gate[i];
        } else {
            st.out = vectorize(st.v);
        }
        feedback = h.gatedFeedback ? st.out : vectorize(st.v);
        steps[pos] = std::move(st);
    }
    return steps;
}

struct SeqForward {
    std::vector<StepRecord> fwd, bwd;
    std::vector<Vector> concat;  // [fwdOut ; bwdOut] per position
};

SeqForward runSeq(const ModelParams& p, const TokenSequence& seq) {
    if (seq.words.empty())
        throw DegenerateInputError("training sequence with no tokens");
    SeqForward f;
    f.fwd = runDir(p.hyper, p.fwd, seq.words, Direction::Forward);
    f.bwd = runDir(p.hyper, p.bwd, seq.words, Direction::Backward);
    f.concat.resize(seq.words.size());
    for (std::size_t i = 0; i < seq.words.size(); ++i) {
        Vector u = f.fwd[i].out;
        u.insert(u.end(), f.bwd[i].out.begin(), f.bwd[i].out.end());
        f.concat[i] = std::move(u);
    }
    return f;
}

int argmax(const Vector& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

// start/end logits of the span head: l_i = sum_d w_d u_id q_d with q the
// mean token output
Vector spanLogits(const Vector& weight, const std::vector<Vector>& u, const Vector& q) {
    Vector l(u.size(), 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        double s = 0.0;
        for (std::size_t d = 0; d < q.size(); ++d) s += weight[d] * u[i][d] * q[d];
        l[i] = s;
    }
    return l;
}

struct BatchTotals {
    std::size_t tokens = 0;
    std::size_t examples = 0;
    std::size_t steps = 0;  // both directions
};

BatchTotals countBatch(const std::vector<TokenSequence>& batch) {
    BatchTotals t;
    t.examples = batch.size();
    for (const auto& seq : batch) t.tokens += seq.words.size();
    t.steps = 2 * t.tokens;
    return t;
}

void checkSpanTargets(const TokenSequence& seq) {
    const int n = static_cast<int>(seq.words.size());
    if (seq.spanStart < 0 || seq.spanEnd < seq.spanStart || seq.spanEnd >= n)
        throw InputError("span targets missing or out of range");
}

}  // namespace

ForwardStats forwardLoss(const ModelParams& params, const std::vector<TokenSequence>& batch,
                         const ObjectiveConfig& cfg) {
    if (batch.empty())
        throw DegenerateInputError("forwardLoss: empty batch");
    params.validate();
    const BatchTotals totals = countBatch(batch);

    double ceSum = 0.0;
    double qSum = 0.0;
    double correct = 0.0;
    OnehotnessAccumulator acc;

    for (const auto& seq : batch) {
        const SeqForward f = runSeq(params, seq);
        for (std::size_t i = 0; i < seq.words.size(); ++i) {
            StepTrace t;
            t.symbolAttention = f.fwd[i].aS;
            t.roleAttention = f.fwd[i].aR;
            acc.add(t);
            qSum += stepQuantizationPenalty(f.fwd[i].aS, f.fwd[i].aR);
            t.symbolAttention = f.bwd[i].aS;
            t.roleAttention = f.bwd[i].aR;
            acc.add(t);
            qSum += stepQuantizationPenalty(f.bwd[i].aS, f.bwd[i].aR);
        }
        if (cfg.taskKind == TaskKind::TokenClassification) {
            for (std::size_t i = 0; i < seq.words.size(); ++i) {
                const Vector logits = classify(params, f.concat[i]);
                ceSum += crossEntropy(logits, seq.labels[i]);
                if (argmax(logits) == seq.labels[i]) correct += 1.0;
            }
        } else {
            checkSpanTargets(seq);
            Vector q(f.concat[0].size(), 0.0);
            for (const auto& u : f.concat) addScaled(q, u, 1.0);
            for (auto& x : q) x /= static_cast<double>(f.concat.size());
            const Vector ls = spanLogits(params.span->startWeight, f.concat, q);
            const Vector le = spanLogits(params.span->endWeight, f.concat, q);
            ceSum += 0.5 * (crossEntropy(ls, seq.spanStart) + crossEntropy(le, seq.spanEnd));
            if (argmax(ls) == seq.spanStart && argmax(le) == seq.spanEnd) correct += 1.0;
        }
    }

    const double denom = cfg.taskKind == TaskKind::TokenClassification
                             ? static_cast<double>(totals.tokens)
                             : static_cast<double>(totals.examples);
    ForwardStats out;
    out.loss.crossEntropy = ceSum / denom;
    out.loss.quantization =
        cfg.qAggregation == QAggregation::Mean ? qSum / static_cast<double>(totals.steps) : qSum;
    out.loss.total = out.loss.crossEntropy + cfg.cQ * out.loss.quantization;
    out.accuracy = correct / denom;
    out.tokens = totals.tokens;
    out.attention = acc.finish();
    return out;
}

namespace {

void addInPlace(Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

// One direction of backprop-through-time. dout is the loss gradient w.r.t.
// each position's output; lambdaQ scales the quantization gradient applied
// at every step.
void backpropDir(const Hyper& h, const CellParams& p, const std::vector<StepRecord>& steps,
                 const std::vector<Vector>& words, const std::vector<Vector>& dout,
                 Direction dir, double lambdaQ, CellParams& g) {
    const std::size_t n = words.size();
    const std::size_t m = static_cast<std::size_t>(h.boundSize());
    const auto dS = static_cast<std::size_t>(h.dSymbols);
    const auto dR = static_cast<std::size_t>(h.dRoles);

    Matrix dFeedback(dS, dR);
    for (std::size_t kk = n; kk-- > 0;) {
        const std::size_t pos = visitPos(dir, kk, n);
        const StepRecord& st = steps[pos];
        const Vector& w = words[pos];

        Vector doutTotal = dout[pos];
        if (h.gatedFeedback) addScaled(doutTotal, vectorize(dFeedback), 1.0);

        Vector dvecV(m, 0.0);
        Vector dzg;
        if (h.gateEnabled) {
            const Vector vvec = vectorize(st.v);
            dzg.assign(m, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                dvecV[i] = doutTotal[i] * st.gate[i];
                dzg[i] = doutTotal[i] * vvec[i] * st.gate[i] * (1.0 - st.gate[i]);
            }
            addOuterScaled(g.gate->inputWeight, dzg, w, 1.0);
            addOuterScaled(g.gate->recurrentWeight, dzg, st.xPrev, 1.0);
            addScaled(g.gate->bias, dzg, 1.0);
        } else {
            dvecV = doutTotal;
        }

        Matrix dV = reshape(dvecV, dS, dR);
        if (!h.gatedFeedback) addInPlace(dV, dFeedback);

        // v = s r^T
        Vector ds(dS, 0.0), dr(dR, 0.0);
        for (std::size_t j = 0; j < dR; ++j)
            for (std::size_t i = 0; i < dS; ++i) {
                ds[i] += dV(i, j) * st.r[j];
                dr[j] += dV(i, j) * st.s[i];
            }
        addOuterScaled(g.symbolEmbeddings, ds, st.aS, 1.0);
        addOuterScaled(g.roleEmbeddings, dr, st.aR, 1.0);

        Vector daS = matTvec(p.symbolEmbeddings, ds);
        Vector daR = matTvec(p.roleEmbeddings, dr);
        if (lambdaQ != 0.0) {
            addScaled(daS, quantizationPenaltyGrad(st.aS), lambdaQ);
            addScaled(daR, quantizationPenaltyGrad(st.aR), lambdaQ);
        }

        Vector dzS(st.aS.size()), dzR(st.aR.size());
        for (std::size_t i = 0; i < dzS.size(); ++i)
            dzS[i] = daS[i] * st.aS[i] * (1.0 - st.aS[i]);
        for (std::size_t i = 0; i < dzR.size(); ++i)
            dzR[i] = daR[i] * st.aR[i] * (1.0 - st.aR[i]);

        addOuterScaled(g.symbolInput, dzS, w, 1.0);
        addOuterScaled(g.symbolRecurrent, dzS, st.xPrev, 1.0);
        addScaled(g.symbolBias, dzS, 1.0);
        addOuterScaled(g.roleInput, dzR, w, 1.0);
        addOuterScaled(g.roleRecurrent, dzR, st.xPrev, 1.0);
        addScaled(g.roleBias, dzR, 1.0);

        Vector dxPrev = matTvec(p.symbolRecurrent, dzS);
        addScaled(dxPrev, matTvec(p.roleRecurrent, dzR), 1.0);
        if (h.gateEnabled) addScaled(dxPrev, matTvec(p.gate->recurrentWeight, dzg), 1.0);
        dFeedback = reshape(dxPrev, dS, dR);
    }
}

}  // namespace

BackwardResult backward(const ModelParams& params, const std::vector<TokenSequence>& batch,
                        const ObjectiveConfig& cfg) {
    if (batch.empty())
        throw DegenerateInputError("backward: empty batch");
    params.validate();
    const BatchTotals totals = countBatch(batch);
    const std::size_t m = static_cast<std::size_t>(params.hyper.boundSize());

    const double ceScale = cfg.taskKind == TaskKind::TokenClassification
                               ? 1.0 / static_cast<double>(totals.tokens)
                               : 1.0 / static_cast<double>(totals.examples);
    const double lambdaQ = cfg.qAggregation == QAggregation::Mean
                               ? cfg.cQ / static_cast<double>(totals.steps)
                               : cfg.cQ;

    BackwardResult res;
    res.grads = ModelGrads::zerosLike(params);
    double ceSum = 0.0;
    double qSum = 0.0;
    double correct = 0.0;
    OnehotnessAccumulator acc;

    for (const auto& seq : batch) {
        const SeqForward f = runSeq(params, seq);
        const std::size_t n = seq.words.size();
        for (std::size_t i = 0; i < n; ++i) {
            StepTrace t;
            t.symbolAttention = f.fwd[i].aS;
            t.roleAttention = f.fwd[i].aR;
            acc.add(t);
            qSum += stepQuantizationPenalty(f.fwd[i].aS, f.fwd[i].aR);
            t.symbolAttention = f.bwd[i].aS;
            t.roleAttention = f.bwd[i].aR;
            acc.add(t);
            qSum += stepQuantizationPenalty(f.bwd[i].aS, f.bwd[i].aR);
        }

        std::vector<Vector> doutF(n, Vector(m, 0.0));
        std::vector<Vector> doutB(n, Vector(m, 0.0));

        if (cfg.taskKind == TaskKind::TokenClassification) {
            for (std::size_t i = 0; i < n; ++i) {
                const Vector logits = classify(params, f.concat[i]);
                ceSum += crossEntropy(logits, seq.labels[i]);
                if (argmax(logits) == seq.labels[i]) correct += 1.0;
                Vector dlogits = crossEntropyGrad(logits, seq.labels[i]);
                for (auto& x : dlogits) x *= ceScale;
                addOuterScaled(res.grads.classifier->weight, dlogits, f.concat[i], 1.0);
                addScaled(res.grads.classifier->bias, dlogits, 1.0);
                const Vector du = matTvec(params.classifier->weight, dlogits);
                for (std::size_t d = 0; d < m; ++d) {
                    doutF[i][d] += du[d];
                    doutB[i][d] += du[m + d];
                }
            }
        } else {
            checkSpanTargets(seq);
            const std::size_t width = 2 * m;
            Vector q(width, 0.0);
            for (const auto& u : f.concat) addScaled(q, u, 1.0);
            for (auto& x : q) x /= static_cast<double>(n);
            const Vector ls = spanLogits(params.span->startWeight, f.concat, q);
            const Vector le = spanLogits(params.span->endWeight, f.concat, q);
            ceSum += 0.5 * (crossEntropy(ls, seq.spanStart) + crossEntropy(le, seq.spanEnd));
            if (argmax(ls) == seq.spanStart && argmax(le) == seq.spanEnd) correct += 1.0;

            std::vector<Vector> du(n, Vector(width, 0.0));
            auto applyHead = [&](const Vector& weight, Vector& gWeight, const Vector& logits,
                                 int target) {
                Vector dl = crossEntropyGrad(logits, target);
                for (auto& x : dl) x *= 0.5 * ceScale;
                Vector colSum(width, 0.0);  // sum_i dl_i u_id
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t d = 0; d < width; ++d) colSum[d] += dl[i] * f.concat[i][d];
                for (std::size_t d = 0; d < width; ++d) gWeight[d] += colSum[d] * q[d];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t d = 0; d < width; ++d)
                        du[i][d] += dl[i] * weight[d] * q[d] +
                                    weight[d] * colSum[d] / static_cast<double>(n);
            };
            applyHead(params.span->startWeight, res.grads.span->startWeight, ls, seq.spanStart);
            applyHead(params.span->endWeight, res.grads.span->endWeight, le, seq.spanEnd);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t d = 0; d < m; ++d) {
                    doutF[i][d] += du[i][d];
                    doutB[i][d] += du[i][m + d];
                }
        }

        backpropDir(params.hyper, params.fwd, f.fwd, seq.words, doutF, Direction::Forward,
                    lambdaQ, res.grads.fwd);
        backpropDir(params.hyper, params.bwd, f.bwd, seq.words, doutB, Direction::Backward,
                    lambdaQ, res.grads.bwd);
    }

    const double denom = cfg.taskKind == TaskKind::TokenClassification
                             ? static_cast<double>(totals.tokens)
                             : static_cast<double>(totals.examples);
    res.loss.crossEntropy = ceSum / denom;
    res.loss.quantization =
        cfg.qAggregation == QAggregation::Mean ? qSum / static_cast<double>(totals.steps) : qSum;
    res.loss.total = res.loss.crossEntropy + cfg.cQ * res.loss.quantization;
    res.accuracy = correct / denom;
    res.tokens = totals.tokens;
    res.attention = acc.finish();

    for (const auto& ref : gradRefs(res.grads)) {
        for (std::size_t i = 0; i < ref.size; ++i)
            if (!std::isfinite(ref.data[i]))
                throw NumericalError("backward: non-finite gradient in " + ref.name);
    }
    return res;
}

namespace {

// Long-double mirror of the forward pass. Parameters stay double; all
// intermediates and the final objective carry 64-bit mantissas so the
// central difference is not cancellation-limited.
using LVec = std::vector<long double>;

long double sigl(long double x) {
    if (x > 36.0L) x = 36.0L;
    if (x < -36.0L) x = -36.0L;
    if (x >= 0.0L) return 1.0L / (1.0L + std::exp(-x));
    const long double e = std::exp(x);
    return e / (1.0L + e);
}

LVec matvecL(const Matrix& w, const LVec& x) {
    LVec out(w.rows(), 0.0L);
    for (std::size_t j = 0; j < w.cols(); ++j) {
        const long double xj = x[j];
        for (std::size_t i = 0; i < w.rows(); ++i) out[i] += static_cast<long double>(w(i, j)) * xj;
    }
    return out;
}

LVec toL(const Vector& v) { return LVec(v.begin(), v.end()); }

long double qPenaltyL(const LVec& a) {
    long double bin = 0.0L, sq = 0.0L;
    for (long double x : a) {
        bin += x * x * (1.0L - x) * (1.0L - x);
        sq += x * x;
    }
    const long double unit = sq - 1.0L;
    return bin + unit * unit;
}

long double crossEntropyL(const LVec& logits, int target) {
    long double m = logits[0];
    for (long double l : logits) m = std::max(m, l);
    long double z = 0.0L;
    for (long double l : logits) z += std::exp(l - m);
    return std::log(z) + m - logits[static_cast<std::size_t>(target)];
}

struct DirStateL {
    std::vector<LVec> out;  // per position
};

DirStateL runDirL(const Hyper& h, const CellParams& p, const std::vector<Vector>& words,
                  Direction dir, long double& qSum) {
    const std::size_t n = words.size();
    const std::size_t m = static_cast<std::size_t>(h.boundSize());
    const auto dS = static_cast<std::size_t>(h.dSymbols);
    DirStateL st;
    st.out.resize(n);
    LVec feedback(m, 0.0L);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t pos = visitPos(dir, k, n);
        const LVec w = toL(words[pos]);
        LVec zs = matvecL(p.symbolInput, w);
        {
            const LVec rec = matvecL(p.symbolRecurrent, feedback);
            for (std::size_t i = 0; i < zs.size(); ++i)
                zs[i] = sigl(zs[i] + rec[i] + static_cast<long double>(p.symbolBias[i]));
        }
        LVec zr = matvecL(p.roleInput, w);
        {
            const LVec rec = matvecL(p.roleRecurrent, feedback);
            for (std::size_t i = 0; i < zr.size(); ++i)
                zr[i] = sigl(zr[i] + rec[i] + static_cast<long double>(p.roleBias[i]));
        }
        qSum += qPenaltyL(zs) + qPenaltyL(zr);
        const LVec s = matvecL(p.symbolEmbeddings, zs);
        const LVec r = matvecL(p.roleEmbeddings, zr);
        LVec vflat(m);  // column-major outer product
        for (std::size_t j = 0; j < r.size(); ++j)
            for (std::size_t i = 0; i < s.size(); ++i) vflat[j * dS + i] = s[i] * r[j];
        LVec out = vflat;
        if (h.gateEnabled) {
            LVec zg = matvecL(p.gate->inputWeight, w);
            const LVec rec = matvecL(p.gate->recurrentWeight, feedback);
            for (std::size_t i = 0; i < m; ++i)
                out[i] *= sigl(zg[i] + rec[i] + static_cast<long double>(p.gate->bias[i]));
        }
        feedback = h.gatedFeedback ? out : vflat;
        st.out[pos] = std::move(out);
    }
    return st;
}

}  // namespace

long double preciseLoss(const ModelParams& params, const std::vector<TokenSequence>& batch,
                        const ObjectiveConfig& cfg) {
    if (batch.empty())
        throw DegenerateInputError("preciseLoss: empty batch");
    const BatchTotals totals = countBatch(batch);
    const std::size_t m = static_cast<std::size_t>(params.hyper.boundSize());

    long double ceSum = 0.0L;
    long double qSum = 0.0L;
    for (const auto& seq : batch) {
        const std::size_t n = seq.words.size();
        const DirStateL fwd = runDirL(params.hyper, params.fwd, seq.words, Direction::Forward, qSum);
        const DirStateL bwd = runDirL(params.hyper, params.bwd, seq.words, Direction::Backward, qSum);
        std::vector<LVec> concat(n);
        for (std::size_t i = 0; i < n; ++i) {
            concat[i] = fwd.out[i];
            concat[i].insert(concat[i].end(), bwd.out[i].begin(), bwd.out[i].end());
        }
        if (cfg.taskKind == TaskKind::TokenClassification) {
            for (std::size_t i = 0; i < n; ++i) {
                LVec logits = matvecL(params.classifier->weight, concat[i]);
                for (std::size_t c = 0; c < logits.size(); ++c)
                    logits[c] += static_cast<long double>(params.classifier->bias[c]);
                ceSum += crossEntropyL(logits, seq.labels[i]);
            }
        } else {
            checkSpanTargets(seq);
            const std::size_t width = 2 * m;
            LVec q(width, 0.0L);
            for (const auto& u : concat)
                for (std::size_t d = 0; d < width; ++d) q[d] += u[d];
            for (auto& x : q) x /= static_cast<long double>(n);
            auto logitsOf = [&](const Vector& weight) {
                LVec l(n, 0.0L);
                for (std::size_t i = 0; i < n; ++i) {
                    long double s = 0.0L;
                    for (std::size_t d = 0; d < width; ++d)
                        s += static_cast<long double>(weight[d]) * concat[i][d] * q[d];
                    l[i] = s;
                }
                return l;
            };
            ceSum += 0.5L * (crossEntropyL(logitsOf(params.span->startWeight), seq.spanStart) +
                             crossEntropyL(logitsOf(params.span->endWeight), seq.spanEnd));
        }
    }
    const long double denom = cfg.taskKind == TaskKind::TokenClassification
                                  ? static_cast<long double>(totals.tokens)
                                  : static_cast<long double>(totals.examples);
    long double q = qSum;
    if (cfg.qAggregation == QAggregation::Mean) q /= static_cast<long double>(totals.steps);
    return ceSum / denom + static_cast<long double>(cfg.cQ) * q;
}

FdReport fdCheckRefs(const std::function<long double()>& lossFn,
                     const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                     double h, const FdOptions& opts) {
    if (h <= 0.0)
        throw ConfigError("fdCheck: h must be positive");
    if (params.size() != grads.size())
        throw ConfigError("fdCheck: parameter/gradient group mismatch");

    Rng rng(Rng::deriveSeed(opts.seed, 77));
    FdReport rep;
    for (std::size_t gi = 0; gi < params.size(); ++gi) {
        const auto& pr = params[gi];
        const auto& gr = grads[gi];
        if (pr.size != gr.size)
            throw ConfigError("fdCheck: shape mismatch in " + pr.name);
        std::vector<std::size_t> coords;
        if (pr.size <= opts.fullSweepLimit) {
            coords.resize(pr.size);
            for (std::size_t i = 0; i < pr.size; ++i) coords[i] = i;
        } else {
            std::unordered_set<std::size_t> seen;
            while (seen.size() < std::min(opts.sampleSize, pr.size))
                seen.insert(rng.index(pr.size));
            coords.assign(seen.begin(), seen.end());
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t c : coords) {
            const double orig = pr.data[c];
            pr.data[c] = orig + h;
            const long double fp = lossFn();
            pr.data[c] = orig - h;
            const long double fm = lossFn();
            pr.data[c] = orig;
            const double numeric = static_cast<double>((fp - fm) / (2.0L * h));
            const double analytic = gr.data[c];
            const double rel = std::fabs(analytic - numeric) /
                               std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            ++rep.coordsChecked;
            if (rel > rep.maxRelErr) {
                rep.maxRelErr = rel;
                rep.worstParam = pr.name + "[" + std::to_string(c) + "]";
            }
        }
    }
    return rep;
}

FdReport fdCheck(ModelParams& params, const std::vector<TokenSequence>& batch,
                 const ObjectiveConfig& cfg, double h, const FdOptions& opts) {
    BackwardResult bw = backward(params, batch, cfg);
    auto prefs = paramRefs(params);
    auto grefs = gradRefs(bw.grads);
    if (opts.corruptAnalytic && !grefs.empty() && grefs[0].size > 0)
        grefs[0].data[0] += 1.0;
    const auto lossFn = [&]() { return preciseLoss(params, batch, cfg); };
    return fdCheckRefs(lossFn, prefs, grefs, h, opts);
}

AdaDeltaState AdaDeltaState::zerosLike(const std::vector<ParamRef>& refs, double rho,
                                       double epsilon) {
    if (rho <= 0.0 || rho >= 1.0)
        throw ConfigError("AdaDelta: rho must be in (0,1)");
    if (epsilon <= 0.0)
        throw ConfigError("AdaDelta: epsilon must be positive");
    AdaDeltaState s;
    s.rho = rho;
    s.epsilon = epsilon;
    for (const auto& r : refs) {
        s.accumGradSq.emplace_back(r.size, 0.0);
        s.accumUpdateSq.emplace_back(r.size, 0.0);
    }
    return s;
}

void adadeltaUpdate(AdaDeltaState& state, const std::vector<ParamRef>& params,
                    const std::vector<ParamRef>& grads) {
    if (params.size() != grads.size() || params.size() != state.accumGradSq.size())
        throw ConfigError("adadeltaUpdate: group count mismatch");
    for (std::size_t gi = 0; gi < params.size(); ++gi) {
        const auto& pr = params[gi];
        const auto& gr = grads[gi];
        Vector& eg = state.accumGradSq[gi];
        Vector& eu = state.accumUpdateSq[gi];
        if (pr.size != gr.size || pr.size != eg.size())
            throw ConfigError("adadeltaUpdate: shape mismatch in " + pr.name);
        const double rho = state.rho;
        const double eps = state.epsilon;
        for (std::size_t i = 0; i < pr.size; ++i) {
            const double g = gr.data[i];
            eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
            const double d = -(std::sqrt(eu[i] + eps) / std::sqrt(eg[i] + eps)) * g;
            eu[i] = rho * eu[i] + (1.0 - rho) * d * d;
            pr.data[i] += d;
        }
    }
}

void TrainConfig::validate() const {
    if (epochs < 1)
        throw ConfigError("TrainConfig: epochs must be >= 1");
    if (batchSize < 1)
        throw ConfigError("TrainConfig: batchSize must be >= 1");
    if (startEpoch < 0)
        throw ConfigError("TrainConfig: startEpoch must be >= 0");
}

TrainResult trainLoop(const TrainConfig& cfg, const std::vector<TokenSequence>& dataset,
                      ModelParams& params, const AdaDeltaState* resumeState) {
    cfg.validate();
    if (dataset.empty())
        throw DegenerateInputError("trainLoop: empty dataset");
    params.validate();

    AdaDeltaState state = resumeState
                              ? *resumeState
                              : AdaDeltaState::zerosLike(paramRefs(params), cfg.rho, cfg.epsilon);
    {
        auto refs = paramRefs(params);
        if (state.accumGradSq.size() != refs.size())
            throw ConfigError("trainLoop: optimizer state does not match model");
    }

    TrainResult res;
    res.epochsCompleted = cfg.startEpoch;
    ModelParams good = params;
    AdaDeltaState goodState = state;

    for (int e = 0; e < cfg.epochs; ++e) {
        const int epochNo = cfg.startEpoch + e + 1;
        Rng shuffleRng(Rng::deriveSeed(cfg.seed, 1000 + static_cast<std::uint64_t>(epochNo)));
        const auto perm = shuffleRng.permutation(dataset.size());

        double ceSum = 0.0, qSum = 0.0, maxSum = 0.0, accSum = 0.0;
        std::size_t tokenSum = 0, stepSum = 0, exampleSum = 0;
        bool diverged = false;

        for (std::size_t off = 0; off < perm.size(); off += static_cast<std::size_t>(cfg.batchSize)) {
            const std::size_t hi = std::min(perm.size(), off + static_cast<std::size_t>(cfg.batchSize));
            std::vector<TokenSequence> batch;
            batch.reserve(hi - off);
            for (std::size_t i = off; i < hi; ++i) batch.push_back(dataset[perm[i]]);

            BackwardResult bw;
            try {
                bw = backward(params, batch, cfg.objective);
            } catch (const NumericalError&) {
                diverged = true;
                break;
            }
            if (!std::isfinite(bw.loss.total)) {
                diverged = true;
                break;
            }

            auto grefs = gradRefs(bw.grads);
            if (cfg.clipNorm > 0.0) {
                double sq = 0.0;
                for (const auto& r : grefs)
                    for (std::size_t i = 0; i < r.size; ++i) sq += r.data[i] * r.data[i];
                const double norm = std::sqrt(sq);
                if (norm > cfg.clipNorm) {
                    const double scale = cfg.clipNorm / norm;
                    for (const auto& r : grefs)
                        for (std::size_t i = 0; i < r.size; ++i) r.data[i] *= scale;
                }
            }
            auto prefs = paramRefs(params);
            adadeltaUpdate(state, prefs, grefs);

            const double exDen = cfg.objective.taskKind == TaskKind::TokenClassification
                                     ? static_cast<double>(bw.tokens)
                                     : static_cast<double>(batch.size());
            ceSum += bw.loss.crossEntropy * exDen;
            accSum += bw.accuracy * exDen;
            exampleSum += static_cast<std::size_t>(exDen);
            const std::size_t steps = 2 * bw.tokens;
            qSum += bw.attention.meanQ * static_cast<double>(steps);
            maxSum += bw.attention.meanMaxComponent * static_cast<double>(steps);
            stepSum += steps;
            tokenSum += bw.tokens;
        }

        if (diverged) {
            params = good;
            state = goodState;
            res.aborted = true;
            break;
        }

        EpochMetrics m;
        m.epoch = epochNo;
        m.crossEntropy = ceSum / static_cast<double>(exampleSum);
        m.quantization = qSum / static_cast<double>(stepSum);
        m.meanMaxComponent = maxSum / static_cast<double>(stepSum);
        m.accuracy = accSum / static_cast<double>(exampleSum);
        res.log.push_back(m);

        good = params;
        goodState = state;
        res.epochsCompleted = epochNo;
    }

    res.optimizer = std::move(state);
    return res;
}

void writeMetricsCsv(const MetricsLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("writeMetricsCsv: cannot write " + path);
    out << "epoch,crossEntropy,quantization,meanMaxComponent,accuracy\n";
    char buf[512];
    for (const auto& m : log) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.crossEntropy,
                      m.quantization, m.meanMaxComponent, m.accuracy);
        out << buf;
    }
    if (!out)
        throw IoError("writeMetricsCsv: write failed for " + path);
}

MetricsLog readMetricsCsv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("readMetricsCsv: cannot open " + path);
    MetricsLog log;
    std::string line;
    if (!std::getline(in, line))
        throw IoError("readMetricsCsv: empty file " + path);
    std::size_t lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        EpochMetrics m;
        std::istringstream ss(line);
        std::string field;
        auto nextField = [&](const char* what) {
            if (!std::getline(ss, field, ','))
                throw IoError("readMetricsCsv: line " + std::to_string(lineNo) + ": missing " + what);
            return field;
        };
        m.epoch = std::stoi(nextField("epoch"));
        m.crossEntropy = std::stod(nextField("crossEntropy"));
        m.quantization = std::stod(nextField("quantization"));
        m.meanMaxComponent = std::stod(nextField("meanMaxComponent"));
        m.accuracy = std::stod(nextField("accuracy"));
        log.push_back(m);
    }
    return log;
}

}  // namespace tprn
