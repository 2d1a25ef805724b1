#include "tprn/model.hpp"

#include <cmath>

namespace tprn {

ModelParams ModelParams::init(const Hyper& h, TaskKind task, int numLabels, std::uint64_t seed) {
    h.validate();
    ModelParams p;
    p.hyper = h;
    {
        Rng rng(Rng::deriveSeed(seed, 1));
        p.fwd = CellParams::init(h, rng);
    }
    {
        Rng rng(Rng::deriveSeed(seed, 2));
        p.bwd = CellParams::init(h, rng);
    }
    Rng rng(Rng::deriveSeed(seed, 3));
    const std::size_t width = 2 * static_cast<std::size_t>(h.boundSize());
    if (task == TaskKind::TokenClassification) {
        if (numLabels <= 0) throw ConfigError("ModelParams: numLabels must be positive");
        ClassifierHead head;
        const double a = std::sqrt(6.0 / static_cast<double>(numLabels + width));
        head.weight = Matrix(numLabels, width);
        for (std::size_t j = 0; j < width; ++j)
            for (std::size_t i = 0; i < static_cast<std::size_t>(numLabels); ++i)
                head.weight(i, j) = rng.uniform(-a, a);
        head.bias = Vector(numLabels, 0.0);
        p.classifier = std::move(head);
        p.numLabels = numLabels;
    } else {
        SpanHead head;
        const double a = std::sqrt(6.0 / static_cast<double>(width + 1));
        head.startWeight.resize(width);
        head.endWeight.resize(width);
        for (auto& x : head.startWeight) x = rng.uniform(-a, a);
        for (auto& x : head.endWeight) x = rng.uniform(-a, a);
        p.span = std::move(head);
    }
    return p;
}

void ModelParams::validate() const {
    hyper.validate();
    fwd.validate(hyper);
    bwd.validate(hyper);
    const std::size_t width = 2 * static_cast<std::size_t>(hyper.boundSize());
    if (classifier) {
        if (classifier->weight.rows() != static_cast<std::size_t>(numLabels) ||
            classifier->weight.cols() != width || classifier->bias.size() != static_cast<std::size_t>(numLabels))
            throw ConfigError("ModelParams: classifier head shape mismatch");
    }
    if (span) {
        if (span->startWeight.size() != width || span->endWeight.size() != width)
            throw ConfigError("ModelParams: span head shape mismatch");
    }
    if (!classifier && !span)
        throw ConfigError("ModelParams: no task head present");
}

ModelGrads ModelGrads::zerosLike(const ModelParams& p) {
    ModelGrads g;
    g.fwd = CellParams::zerosLike(p.fwd);
    g.bwd = CellParams::zerosLike(p.bwd);
    if (p.classifier) {
        ClassifierHead h;
        h.weight = Matrix(p.classifier->weight.rows(), p.classifier->weight.cols());
        h.bias = Vector(p.classifier->bias.size(), 0.0);
        g.classifier = std::move(h);
    }
    if (p.span) {
        SpanHead h;
        h.startWeight = Vector(p.span->startWeight.size(), 0.0);
        h.endWeight = Vector(p.span->endWeight.size(), 0.0);
        g.span = std::move(h);
    }
    return g;
}

namespace {

void collectCell(CellParams& c, const std::string& prefix, std::vector<ParamRef>& out) {
    auto mat = [&](Matrix& m, const char* n) {
        out.push_back({prefix + n, m.data().data(), m.size()});
    };
    auto vec = [&](Vector& v, const char* n) {
        out.push_back({prefix + n, v.data(), v.size()});
    };
    mat(c.symbolEmbeddings, "symbolEmbeddings");
    mat(c.roleEmbeddings, "roleEmbeddings");
    mat(c.symbolInput, "symbolInput");
    mat(c.symbolRecurrent, "symbolRecurrent");
    vec(c.symbolBias, "symbolBias");
    mat(c.roleInput, "roleInput");
    mat(c.roleRecurrent, "roleRecurrent");
    vec(c.roleBias, "roleBias");
    if (c.gate) {
        mat(c.gate->inputWeight, "gate.inputWeight");
        mat(c.gate->recurrentWeight, "gate.recurrentWeight");
        vec(c.gate->bias, "gate.bias");
    }
}

template <class HeadOptC, class HeadOptS>
void collectHeads(HeadOptC& classifier, HeadOptS& span, std::vector<ParamRef>& out) {
    if (classifier) {
        out.push_back({"head.weight", classifier->weight.data().data(), classifier->weight.size()});
        out.push_back({"head.bias", classifier->bias.data(), classifier->bias.size()});
    }
    if (span) {
        out.push_back({"head.startWeight", span->startWeight.data(), span->startWeight.size()});
        out.push_back({"head.endWeight", span->endWeight.data(), span->endWeight.size()});
    }
}

}  // namespace

std::vector<ParamRef> paramRefs(ModelParams& p) {
    std::vector<ParamRef> out;
    collectCell(p.fwd, "fwd.", out);
    collectCell(p.bwd, "bwd.", out);
    collectHeads(p.classifier, p.span, out);
    return out;
}

std::vector<ParamRef> gradRefs(ModelGrads& g) {
    std::vector<ParamRef> out;
    collectCell(g.fwd, "fwd.", out);
    collectCell(g.bwd, "bwd.", out);
    collectHeads(g.classifier, g.span, out);
    return out;
}

Vector classify(const ModelParams& p, const Vector& tokenOutput) {
    if (!p.classifier)
        throw ConfigError("classify: model has no classifier head");
    return affine(p.classifier->weight, tokenOutput, p.classifier->bias);
}

}  // namespace tprn
