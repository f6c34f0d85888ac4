#include "ghostgrad/models.hpp"

#include <algorithm>
#include <cmath>

#include "ghostgrad/rng.hpp"

namespace ghostgrad {

namespace {

// Kaiming-uniform-style bound: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
void fill_kaiming(std::span<double> dst, std::size_t fan_in, CounterRng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : dst) v = rng.next_uniform(-bound, bound);
}

}  // namespace

const ParamSegment* ParamVector::find(std::string_view name) const {
    for (const ParamSegment& s : segments)
        if (s.name == name) return &s;
    return nullptr;
}

std::span<const double> ParamVector::segment(std::string_view name) const {
    const ParamSegment* s = find(name);
    if (!s) throw ContractError("ParamVector: no segment named " + std::string(name));
    return std::span<const double>(values).subspan(s->offset, s->size);
}

std::span<double> ParamVector::segment(std::string_view name) {
    const ParamSegment* s = find(name);
    if (!s) throw ContractError("ParamVector: no segment named " + std::string(name));
    return std::span<double>(values).subspan(s->offset, s->size);
}

Model Model::build(const ModelSpec& spec) {
    if (spec.classes <= 0) throw ContractError("ModelSpec: classes must be positive");
    if (spec.ghosts < 0) throw ContractError("ModelSpec: ghosts must be non-negative");

    Model m;
    m.spec_ = spec;

    std::vector<ParamSegment> segs;
    auto add_segment = [&segs](std::string name, Shape shape, bool ghost) {
        ParamSegment s;
        s.name = std::move(name);
        s.shape = std::move(shape);
        s.size = numel(s.shape);
        s.offset = segs.empty() ? 0 : segs.back().offset + segs.back().size;
        s.ghost = ghost;
        segs.push_back(std::move(s));
    };

    std::size_t feat = 0;
    if (spec.kind == ModelSpec::Kind::Cnn2Block) {
        // Each block: 3x3 valid conv, relu, 2x2 pool. If a conv output would
        // be odd, the block input is zero-padded by one row/column first
        // (28 -> 26 -> pool 13 -> pad 14 -> 12 -> pool 6).
        std::size_t h = spec.input_rows, w = spec.input_cols;
        const std::size_t chans[2] = {spec.conv1_channels, spec.conv2_channels};
        for (int blk = 0; blk < 2; ++blk) {
            if (h < 3 || w < 3)
                throw ContractError("ModelSpec: input " + std::to_string(spec.input_rows) + "x" +
                                    std::to_string(spec.input_cols) +
                                    " too small for two conv/pool blocks");
            if ((h - 2) % 2 != 0) ++h;
            if ((w - 2) % 2 != 0) ++w;
            h = (h - 2) / 2;
            w = (w - 2) / 2;
            if (h == 0 || w == 0)
                throw ContractError("ModelSpec: spatial dims collapse to zero in block " +
                                    std::to_string(blk + 1));
            const std::size_t in_ch = blk == 0 ? spec.input_chans : chans[0];
            add_segment("conv" + std::to_string(blk + 1) + ".k",
                        {chans[blk], in_ch, 3, 3}, false);
            add_segment("conv" + std::to_string(blk + 1) + ".b", {chans[blk]}, false);
        }
        feat = chans[1] * h * w;
    } else {
        std::size_t prev = spec.input_chans * spec.input_rows * spec.input_cols;
        for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
            if (spec.hidden[i] == 0) throw ContractError("ModelSpec: zero-width hidden layer");
            add_segment("dense" + std::to_string(i + 1) + ".w", {prev, spec.hidden[i]}, false);
            add_segment("dense" + std::to_string(i + 1) + ".b", {spec.hidden[i]}, false);
            prev = spec.hidden[i];
        }
        feat = prev;
    }
    m.feature_count_ = static_cast<int>(feat);

    const std::size_t c = static_cast<std::size_t>(spec.classes);
    const std::size_t e = static_cast<std::size_t>(spec.ghosts);
    add_segment("head.u_real", {feat, c}, false);
    add_segment("head.b_real", {c}, false);
    add_segment("head.u_ghost", {feat, e}, true);
    add_segment("head.b_ghost", {e}, true);

    ParamVector p;
    p.segments = std::move(segs);
    p.values.assign(p.segments.back().offset + p.segments.back().size, 0.0);

    // Backbone and real head columns draw from one stream in a fixed order
    // that does not depend on e, so arms differing only in ghost count share
    // identical draws. Ghost parameters come from their own stream.
    CounterRng init_rng(spec.init_seed, CounterRng::kInit);
    for (ParamSegment& s : p.segments) {
        if (s.ghost || s.name.ends_with(".b")) continue;
        if (s.name == "head.b_real") continue;
        std::size_t fan_in = 1;
        if (s.shape.size() == 4) fan_in = s.shape[1] * s.shape[2] * s.shape[3];
        else if (s.shape.size() == 2) fan_in = s.shape[0];
        fill_kaiming(std::span<double>(p.values).subspan(s.offset, s.size), fan_in, init_rng);
    }
    if (e > 0 && spec.gamma_init != GammaInit::Zeros) {
        CounterRng ghost_rng(spec.init_seed, CounterRng::kGhostInit);
        auto ug = p.segment("head.u_ghost");
        auto bg = p.segment("head.b_ghost");
        if (spec.gamma_init == GammaInit::SmallGaussian) {
            for (double& v : ug) v = 0.01 * ghost_rng.next_normal();
            for (double& v : bg) v = 0.01 * ghost_rng.next_normal();
        } else {  // FrozenAtNegative
            for (double& v : bg) v = -30.0;
        }
    }
    m.init_params_ = std::move(p);
    return m;
}

void Model::check_batch(const BatchView& batch) const {
    if (batch.count == 0) throw ContractError("Model: empty batch");
    if (batch.chans != spec_.input_chans || batch.rows != spec_.input_rows ||
        batch.cols != spec_.input_cols)
        throw DimensionError("Model: batch is " + std::to_string(batch.chans) + "x" +
                             std::to_string(batch.rows) + "x" + std::to_string(batch.cols) +
                             ", model expects " + std::to_string(spec_.input_chans) + "x" +
                             std::to_string(spec_.input_rows) + "x" +
                             std::to_string(spec_.input_cols));
    if (batch.images.size() != batch.count * batch.chans * batch.rows * batch.cols)
        throw DimensionError("Model: image buffer does not match batch dimensions");
}

Model::GraphOut Model::forward_graph(Tape& tape, const ParamVector& w, const BatchView& batch,
                                     bool requires_grad) const {
    if (w.size() != init_params_.size())
        throw ContractError("Model: parameter vector has " + std::to_string(w.size()) +
                            " entries, expected " + std::to_string(init_params_.size()));
    check_batch(batch);
    const std::size_t n = batch.count;

    GraphOut out;
    std::vector<TensorRef> seg_leaf(init_params_.segments.size());

    // Ghost head columns live in their own segments but enter the graph as
    // one combined [s x (c+e)] weight matrix and one [c+e] bias.
    const std::size_t c = static_cast<std::size_t>(spec_.classes);
    const std::size_t e = static_cast<std::size_t>(spec_.ghosts);
    const std::size_t s = static_cast<std::size_t>(feature_count_);
    const std::size_t width = c + e;

    for (std::size_t i = 0; i < init_params_.segments.size(); ++i) {
        const ParamSegment& seg = init_params_.segments[i];
        if (seg.name.starts_with("head.")) continue;
        std::vector<double> vals(w.values.begin() + static_cast<std::ptrdiff_t>(seg.offset),
                                 w.values.begin() + static_cast<std::ptrdiff_t>(seg.offset + seg.size));
        seg_leaf[i] = tape.leaf(seg.shape, std::move(vals), requires_grad);
    }

    std::vector<double> u_comb(s * width), b_comb(width);
    {
        auto ur = w.segment("head.u_real");
        auto ug = w.segment("head.u_ghost");
        for (std::size_t j = 0; j < s; ++j) {
            for (std::size_t i = 0; i < c; ++i) u_comb[j * width + i] = ur[j * c + i];
            for (std::size_t i = 0; i < e; ++i) u_comb[j * width + c + i] = ug[j * e + i];
        }
        auto br = w.segment("head.b_real");
        auto bg = w.segment("head.b_ghost");
        std::copy(br.begin(), br.end(), b_comb.begin());
        std::copy(bg.begin(), bg.end(), b_comb.begin() + static_cast<std::ptrdiff_t>(c));
    }
    const TensorRef u_leaf = tape.leaf({s, width}, std::move(u_comb), requires_grad);
    const TensorRef b_leaf = tape.leaf({width}, std::move(b_comb), requires_grad);

    TensorRef x = tape.leaf({n, batch.chans, batch.rows, batch.cols},
                            std::vector<double>(batch.images.begin(), batch.images.end()), false);

    auto leaf_of = [&](std::string_view name) {
        for (std::size_t i = 0; i < init_params_.segments.size(); ++i)
            if (init_params_.segments[i].name == name) return seg_leaf[i];
        throw ContractError("Model: missing segment " + std::string(name));
    };

    TensorRef feat;
    if (spec_.kind == ModelSpec::Kind::Cnn2Block) {
        TensorRef cur = x;
        for (int blk = 1; blk <= 2; ++blk) {
            const Node& nd = tape.node(cur);
            const std::size_t h = nd.shape[2], wd = nd.shape[3];
            const std::size_t ph = (h - 2) % 2, pw = (wd - 2) % 2;
            if (ph || pw) cur = tape.zero_pad2d(cur, ph, pw);
            cur = tape.conv2d(cur, leaf_of("conv" + std::to_string(blk) + ".k"));
            cur = tape.channel_bias_add(cur, leaf_of("conv" + std::to_string(blk) + ".b"));
            cur = tape.pointwise(cur, Activation::Relu);
            cur = tape.maxpool2(cur);
        }
        feat = tape.reshape(cur, {n, s});
    } else {
        TensorRef cur = tape.reshape(x, {n, batch.chans * batch.rows * batch.cols});
        for (std::size_t i = 1; i <= spec_.hidden.size(); ++i) {
            cur = tape.matmul(cur, leaf_of("dense" + std::to_string(i) + ".w"));
            cur = tape.bias_add(cur, leaf_of("dense" + std::to_string(i) + ".b"));
            cur = tape.pointwise(cur, Activation::Relu);
        }
        feat = cur;
    }

    TensorRef logits = tape.bias_add(tape.matmul(feat, u_leaf), b_leaf);
    if (spec_.head_activation != Activation::Identity)
        logits = tape.pointwise(logits, spec_.head_activation);

    out.logits = logits;
    out.leaves = std::move(seg_leaf);
    // Combined head leaves ride along at the end for gradient extraction.
    out.leaves.push_back(u_leaf);
    out.leaves.push_back(b_leaf);
    return out;
}

std::vector<double> Model::logits(const ParamVector& w, const BatchView& batch) const {
    Tape tape;
    const GraphOut g = forward_graph(tape, w, batch, false);
    const auto v = tape.value(g.logits);
    return std::vector<double>(v.begin(), v.end());
}

ModelLoss Model::evaluate(const ParamVector& w, const BatchView& batch) const {
    const std::vector<double> z = logits(w, batch);
    ModelLoss out;
    out.loss = ghost_softmax_ce(z, batch.count, batch.labels, spec_.classes, spec_.ghosts);
    const std::size_t width = static_cast<std::size_t>(spec_.classes + spec_.ghosts);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < batch.count; ++r) {
        const double* zr = z.data() + r * width;
        // Predictions are taken over real classes; ghosts are never a label.
        std::size_t best = 0;
        for (std::size_t i = 1; i < static_cast<std::size_t>(spec_.classes); ++i)
            if (zr[i] > zr[best]) best = i;
        if (static_cast<int>(best) == batch.labels[r]) ++hits;
    }
    out.accuracy = static_cast<double>(hits) / static_cast<double>(batch.count);
    return out;
}

LossBreakdown Model::loss_and_grad(const ParamVector& w, const BatchView& batch,
                                   ParamVector* grad) const {
    Tape tape;
    const GraphOut g = forward_graph(tape, w, batch, true);
    const TensorRef loss =
        tape.ghost_cross_entropy(g.logits, batch.labels, spec_.classes, spec_.ghosts);
    tape.backward(loss);

    const LossBreakdown bd = ghost_softmax_ce(tape.value(g.logits), batch.count, batch.labels,
                                              spec_.classes, spec_.ghosts);
    if (grad) {
        grad->segments = init_params_.segments;
        grad->values.assign(init_params_.size(), 0.0);
        const std::size_t nseg = init_params_.segments.size();
        for (std::size_t i = 0; i < nseg; ++i) {
            const ParamSegment& seg = init_params_.segments[i];
            if (seg.name.starts_with("head.")) continue;
            const auto gv = tape.grad(g.leaves[i]);
            std::copy(gv.begin(), gv.end(), grad->values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
        }
        // Split the combined head gradient back into real/ghost segments.
        const std::size_t c = static_cast<std::size_t>(spec_.classes);
        const std::size_t e = static_cast<std::size_t>(spec_.ghosts);
        const std::size_t s = static_cast<std::size_t>(feature_count_);
        const std::size_t width = c + e;
        const auto gu = tape.grad(g.leaves[nseg]);
        const auto gb = tape.grad(g.leaves[nseg + 1]);
        auto ur = grad->segment("head.u_real");
        auto ug = grad->segment("head.u_ghost");
        for (std::size_t j = 0; j < s; ++j) {
            for (std::size_t i = 0; i < c; ++i) ur[j * c + i] = gu[j * width + i];
            for (std::size_t i = 0; i < e; ++i) ug[j * e + i] = gu[j * width + c + i];
        }
        auto br = grad->segment("head.b_real");
        auto bg = grad->segment("head.b_ghost");
        std::copy(gb.begin(), gb.begin() + static_cast<std::ptrdiff_t>(c), br.begin());
        std::copy(gb.begin() + static_cast<std::ptrdiff_t>(c), gb.end(), bg.begin());
    }
    return bd;
}

Model Model::reduced() const {
    ModelSpec s = spec_;
    s.ghosts = 0;
    return build(s);
}

ParamVector Model::strip_ghost(const ParamVector& w) const {
    const Model red = reduced();
    ParamVector out = red.init_params_;
    // Ghost segments sit at the end of the layout, so the reduced vector is
    // the leading prefix.
    std::copy(w.values.begin(), w.values.begin() + static_cast<std::ptrdiff_t>(out.size()),
              out.values.begin());
    return out;
}

GhostHeadConfig Model::head_config(const ParamVector& w) const {
    GhostHeadConfig cfg;
    cfg.c = spec_.classes;
    cfg.e = spec_.ghosts;
    cfg.s = feature_count_;
    cfg.activation = spec_.head_activation;
    const std::size_t c = static_cast<std::size_t>(cfg.c), e = static_cast<std::size_t>(cfg.e);
    const std::size_t s = static_cast<std::size_t>(cfg.s), width = c + e;
    cfg.u.resize(s * width);
    cfg.b.resize(width);
    auto ur = w.segment("head.u_real");
    auto ug = w.segment("head.u_ghost");
    for (std::size_t j = 0; j < s; ++j) {
        for (std::size_t i = 0; i < c; ++i) cfg.u[j * width + i] = ur[j * c + i];
        for (std::size_t i = 0; i < e; ++i) cfg.u[j * width + c + i] = ug[j * e + i];
    }
    auto br = w.segment("head.b_real");
    auto bg = w.segment("head.b_ghost");
    std::copy(br.begin(), br.end(), cfg.b.begin());
    std::copy(bg.begin(), bg.end(), cfg.b.begin() + static_cast<std::ptrdiff_t>(c));
    return cfg;
}

std::map<std::string, std::vector<double>> unflatten_params(const Model& model,
                                                            const ParamVector& w) {
    if (w.size() != model.param_count())
        throw ContractError("unflatten_params: length mismatch, got " + std::to_string(w.size()) +
                            ", expected " + std::to_string(model.param_count()));
    std::map<std::string, std::vector<double>> named;
    for (const ParamSegment& seg : model.init_params().segments) {
        const auto sp = std::span<const double>(w.values).subspan(seg.offset, seg.size);
        named.emplace(seg.name, std::vector<double>(sp.begin(), sp.end()));
    }
    return named;
}

ParamVector flatten_params(const Model& model,
                           const std::map<std::string, std::vector<double>>& named) {
    ParamVector out = model.init_params();
    for (const ParamSegment& seg : model.init_params().segments) {
        const auto it = named.find(seg.name);
        if (it == named.end())
            throw ContractError("flatten_params: missing segment " + seg.name);
        if (it->second.size() != seg.size)
            throw ContractError("flatten_params: segment " + seg.name + " has " +
                                std::to_string(it->second.size()) + " values, expected " +
                                std::to_string(seg.size));
        std::copy(it->second.begin(), it->second.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(seg.offset));
    }
    return out;
}

double gradient_coincidence_gap(const Model& model, const ParamVector& w, const BatchView& batch) {
    ParamVector g_ext;
    model.loss_and_grad(w, batch, &g_ext);
    if (model.spec().ghosts == 0) {
        // The extended and original models are the same object; the gap is
        // identically zero.
        return 0.0;
    }
    const Model red = model.reduced();
    const ParamVector w_red = model.strip_ghost(w);
    ParamVector g_orig;
    red.loss_and_grad(w_red, batch, &g_orig);

    double gap = 0.0;
    for (const ParamSegment& seg : red.init_params().segments) {
        if (seg.ghost || seg.size == 0) continue;
        double acc = 0.0;
        for (std::size_t i = 0; i < seg.size; ++i) {
            const double d = g_ext.values[seg.offset + i] - g_orig.values[seg.offset + i];
            acc += d * d;
        }
        gap = std::max(gap, std::sqrt(acc));
    }
    return gap;
}

}  // namespace ghostgrad
