#include "tprn/cell.hpp"

#include <cmath>
#include <string>

namespace tprn {

void Hyper::validate() const {
    if (nSymbols <= 0 || nRoles <= 0 || dSymbols <= 0 || dRoles <= 0 || dWord <= 0)
        throw ConfigError("Hyper: all dimensions must be positive");
}

namespace {

Matrix glorotUniform(std::size_t rows, std::size_t cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i = 0; i < rows; ++i) m(i, j) = rng.uniform(-a, a);
    return m;
}

void requireShape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols)
        throw ConfigError(std::string(name) + ": expected " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
}

}  // namespace

CellParams CellParams::init(const Hyper& h, Rng& rng) {
    h.validate();
    const auto nS = static_cast<std::size_t>(h.nSymbols);
    const auto nR = static_cast<std::size_t>(h.nRoles);
    const auto dS = static_cast<std::size_t>(h.dSymbols);
    const auto dR = static_cast<std::size_t>(h.dRoles);
    const auto dW = static_cast<std::size_t>(h.dWord);
    const auto m = dS * dR;

    CellParams p;
    p.symbolEmbeddings = glorotUniform(dS, nS, rng);
    p.roleEmbeddings = glorotUniform(dR, nR, rng);
    p.symbolInput = glorotUniform(nS, dW, rng);
    p.symbolRecurrent = glorotUniform(nS, m, rng);
    p.symbolBias = Vector(nS, 0.0);
    p.roleInput = glorotUniform(nR, dW, rng);
    p.roleRecurrent = glorotUniform(nR, m, rng);
    p.roleBias = Vector(nR, 0.0);
    if (h.gateEnabled) {
        GateParams g;
        g.inputWeight = glorotUniform(m, dW, rng);
        g.recurrentWeight = glorotUniform(m, m, rng);
        g.bias = Vector(m, 0.0);
        p.gate = std::move(g);
    }
    return p;
}

CellParams CellParams::zerosLike(const CellParams& p) {
    CellParams z;
    z.symbolEmbeddings = Matrix(p.symbolEmbeddings.rows(), p.symbolEmbeddings.cols());
    z.roleEmbeddings = Matrix(p.roleEmbeddings.rows(), p.roleEmbeddings.cols());
    z.symbolInput = Matrix(p.symbolInput.rows(), p.symbolInput.cols());
    z.symbolRecurrent = Matrix(p.symbolRecurrent.rows(), p.symbolRecurrent.cols());
    z.symbolBias = Vector(p.symbolBias.size(), 0.0);
    z.roleInput = Matrix(p.roleInput.rows(), p.roleInput.cols());
    z.roleRecurrent = Matrix(p.roleRecurrent.rows(), p.roleRecurrent.cols());
    z.roleBias = Vector(p.roleBias.size(), 0.0);
    if (p.gate) {
        GateParams g;
        g.inputWeight = Matrix(p.gate->inputWeight.rows(), p.gate->inputWeight.cols());
        g.recurrentWeight = Matrix(p.gate->recurrentWeight.rows(), p.gate->recurrentWeight.cols());
        g.bias = Vector(p.gate->bias.size(), 0.0);
        z.gate = std::move(g);
    }
    return z;
}

void CellParams::validate(const Hyper& h) const {
    const auto nS = static_cast<std::size_t>(h.nSymbols);
    const auto nR = static_cast<std::size_t>(h.nRoles);
    const auto dS = static_cast<std::size_t>(h.dSymbols);
    const auto dR = static_cast<std::size_t>(h.dRoles);
    const auto dW = static_cast<std::size_t>(h.dWord);
    const auto m = dS * dR;
    requireShape(symbolEmbeddings, dS, nS, "symbolEmbeddings");
    requireShape(roleEmbeddings, dR, nR, "roleEmbeddings");
    requireShape(symbolInput, nS, dW, "symbolInput");
    requireShape(symbolRecurrent, nS, m, "symbolRecurrent");
    requireShape(roleInput, nR, dW, "roleInput");
    requireShape(roleRecurrent, nR, m, "roleRecurrent");
    if (symbolBias.size() != nS || roleBias.size() != nR)
        throw ConfigError("CellParams: bias length mismatch");
    if (h.gateEnabled) {
        if (!gate) throw ConfigError("CellParams: gate enabled but gate block missing");
        requireShape(gate->inputWeight, m, dW, "gate.inputWeight");
        requireShape(gate->recurrentWeight, m, m, "gate.recurrentWeight");
        if (gate->bias.size() != m) throw ConfigError("gate.bias length mismatch");
    }
}

std::pair<Vector, Vector> attend(const Hyper& h, const CellParams& p,
                                 const Vector& word, const Matrix& boundPrev) {
    if (static_cast<int>(word.size()) != h.dWord)
        throw ConfigError("attend: word vector length " + std::to_string(word.size()) +
                          " != dWord " + std::to_string(h.dWord));
    if (static_cast<int>(boundPrev.rows()) != h.dSymbols ||
        static_cast<int>(boundPrev.cols()) != h.dRoles)
        throw ConfigError("attend: bound tensor shape mismatch");
    const Vector x = vectorize(boundPrev);
    Vector zs = affine(p.symbolInput, word, p.symbolBias);
    addScaled(zs, matvec(p.symbolRecurrent, x), 1.0);
    Vector zr = affine(p.roleInput, word, p.roleBias);
    addScaled(zr, matvec(p.roleRecurrent, x), 1.0);
    return {sigmoid(zs), sigmoid(zr)};
}

Matrix bind(const Vector& symbolAttention, const Vector& roleAttention) {
    return outer(symbolAttention, roleAttention);
}

Matrix embed(const CellParams& p, const Matrix& binding) {
    if (binding.rows() != p.symbolEmbeddings.cols() || binding.cols() != p.roleEmbeddings.cols())
        throw ConfigError("embed: binding shape mismatch");
    return matmul(matmul(p.symbolEmbeddings, binding), transpose(p.roleEmbeddings));
}

Vector gateOutput(const Hyper& h, const CellParams& p, const Vector& word,
                  const Matrix& boundPrev, const Matrix& bound) {
    if (!h.gateEnabled || !p.gate)
        throw ConfigError("gateOutput: called with gating disabled");
    Vector zg = affine(p.gate->inputWeight, word, p.gate->bias);
    addScaled(zg, matvec(p.gate->recurrentWeight, vectorize(boundPrev)), 1.0);
    const Vector g = sigmoid(zg);
    Vector out = vectorize(bound);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= g[i];
    return out;
}

StepTrace step(const Hyper& h, const CellParams& p, const Vector& word,
               const Matrix& boundPrev, int tokenIndex) {
    StepTrace t;
    t.tokenIndex = tokenIndex;
    auto [aS, aR] = attend(h, p, word, boundPrev);
    t.symbolAttention = std::move(aS);
    t.roleAttention = std::move(aR);
    t.binding = bind(t.symbolAttention, t.roleAttention);
    // S (a_S a_R^T) R^T == (S a_S)(R a_R)^T; use the cheap factored form
    const Vector s = matvec(p.symbolEmbeddings, t.symbolAttention);
    const Vector r = matvec(p.roleEmbeddings, t.roleAttention);
    t.bound = outer(s, r);
    if (h.gateEnabled)
        t.output = gateOutput(h, p, word, boundPrev, t.bound);
    else
        t.output = vectorize(t.bound);
    return t;
}

std::vector<StepTrace> runSequence(const Hyper& h, const CellParams& p,
                                   const std::vector<Vector>& tokens, Direction dir) {
    if (tokens.empty())
        throw DegenerateInputError("runSequence: empty token sequence");
    const std::size_t n = tokens.size();
    std::vector<StepTrace> traces(n);
    Matrix prev(h.dSymbols, h.dRoles);  // v^(0) = 0
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t pos = dir == Direction::Forward ? k : n - 1 - k;
        StepTrace t = step(h, p, tokens[pos], prev, static_cast<int>(pos));
        prev = h.gatedFeedback ? reshape(t.output, h.dSymbols, h.dRoles) : t.bound;
        traces[pos] = std::move(t);
    }
    return traces;
}

SequenceOutput runBidirectional(const Hyper& h, const CellParams& pFwd,
                                const CellParams& pBwd, const std::vector<Vector>& tokens) {
    SequenceOutput out;
    out.tracesFwd = runSequence(h, pFwd, tokens, Direction::Forward);
    out.tracesBwd = runSequence(h, pBwd, tokens, Direction::Backward);
    out.perToken.resize(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        Vector v = out.tracesFwd[i].output;
        v.insert(v.end(), out.tracesBwd[i].output.begin(), out.tracesBwd[i].output.end());
        out.perToken[i] = std::move(v);
    }
    return out;
}

}  // namespace tprn
