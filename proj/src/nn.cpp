#include "otmatch/nn.hpp"

#include <algorithm>
#include <cmath>

namespace otmatch::nn {

namespace {

double activate(double z, Activation a) {
    return a == Activation::Relu ? std::max(z, 0.0) : z;
}

double activate_grad(double z, Activation a) {
    return a == Activation::Relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0;
}

}  // namespace

ModelParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                     std::size_t num_classes, std::mt19937_64& rng) {
    ModelParams p;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        DenseLayer layer;
        layer.weight = DenseMatrix(h, in);
        layer.bias.assign(h, 0.0);
        layer.act = Activation::Relu;
        const double bound = std::sqrt(6.0 / static_cast<double>(in + h));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : layer.weight.values) w = dist(rng);
        p.extractor.push_back(std::move(layer));
        in = h;
    }
    p.head = DenseMatrix(in, num_classes);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + num_classes));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : p.head.values) w = dist(rng);
    return p;
}

Vector softmax(const Vector& logits, double eps) {
    if (eps < 0.0) throw std::invalid_argument("softmax: temperature must be >= 0");
    Vector probs(logits.size(), 0.0);
    if (logits.empty()) return probs;
    const std::size_t k_max =
        std::max_element(logits.begin(), logits.end()) - logits.begin();
    if (eps == 0.0) {
        probs[k_max] = 1.0;  // hard limit
        return probs;
    }
    const double m = logits[k_max];
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        probs[k] = std::exp((logits[k] - m) / eps);
        z += probs[k];
    }
    for (double& v : probs) v /= z;
    check_finite(probs, "softmax");
    return probs;
}

ForwardCache forward_cached(const ModelParams& params, const Vector& x, double eps) {
    if (x.size() != params.input_dim()) throw DimensionError("forward: input size mismatch");
    ForwardCache c;
    Vector a = x;
    for (const DenseLayer& layer : params.extractor) {
        c.inputs.push_back(a);
        Vector z = matvec(layer.weight, a);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
        c.pre.push_back(z);
        a.resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(z[i], layer.act);
    }
    c.features = a;
    c.logits = matvec_transposed(params.head, c.features);
    check_finite(c.logits, "logits");
    c.probs = softmax(c.logits, eps);
    return c;
}

ForwardResult forward(const ModelParams& params, const Vector& x, double eps) {
    ForwardCache c = forward_cached(params, x, eps);
    return {std::move(c.features), std::move(c.logits), std::move(c.probs)};
}

ParamGrads ParamGrads::zeros_like(const ModelParams& p) {
    ParamGrads g;
    for (const DenseLayer& l : p.extractor) {
        g.weight.emplace_back(l.weight.rows, l.weight.cols);
        g.bias.emplace_back(l.bias.size(), 0.0);
    }
    g.head = DenseMatrix(p.head.rows, p.head.cols);
    return g;
}

void ParamGrads::add(const ParamGrads& o) {
    for (std::size_t l = 0; l < weight.size(); ++l) {
        for (std::size_t i = 0; i < weight[l].values.size(); ++i)
            weight[l].values[i] += o.weight[l].values[i];
        for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += o.bias[l][i];
    }
    for (std::size_t i = 0; i < head.values.size(); ++i) head.values[i] += o.head.values[i];
}

void ParamGrads::scale(double s) {
    for (auto& w : weight)
        for (double& v : w.values) v *= s;
    for (auto& b : bias)
        for (double& v : b) v *= s;
    for (double& v : head.values) v *= s;
}

ParamGrads backward(const ModelParams& params, const ForwardCache& cache,
                    const Vector& dlogits) {
    if (dlogits.size() != params.num_classes())
        throw DimensionError("backward: dlogits size mismatch");
    if (cache.inputs.size() != params.extractor.size())
        throw std::logic_error("backward: stale forward cache");
    ParamGrads g = ParamGrads::zeros_like(params);

    // head: logits = features^T W, so dW(f,k) = feat_f dlogits_k
    const Vector& feat = cache.features;
    for (std::size_t f = 0; f < params.head.rows; ++f)
        for (std::size_t k = 0; k < params.head.cols; ++k)
            g.head.at(f, k) = feat[f] * dlogits[k];
    Vector da = matvec(params.head, dlogits);  // dL/dfeatures

    for (std::size_t li = params.extractor.size(); li-- > 0;) {
        const DenseLayer& layer = params.extractor[li];
        const Vector& z = cache.pre[li];
        const Vector& in = cache.inputs[li];
        Vector dz(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            dz[i] = da[i] * activate_grad(z[i], layer.act);
        for (std::size_t i = 0; i < dz.size(); ++i) {
            g.bias[li][i] = dz[i];
            double* row = g.weight[li].values.data() + i * layer.weight.cols;
            for (std::size_t j = 0; j < layer.weight.cols; ++j) row[j] = dz[i] * in[j];
        }
        if (li > 0) da = matvec_transposed(layer.weight, dz);
    }
    return g;
}

Vector softmax_backward(const Vector& probs, const Vector& dprobs, double eps) {
    if (probs.size() != dprobs.size())
        throw DimensionError("softmax_backward: size mismatch");
    if (eps <= 0.0) throw std::invalid_argument("softmax_backward: eps must be > 0");
    double inner = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) inner += probs[k] * dprobs[k];
    Vector dlogits(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k)
        dlogits[k] = probs[k] * (dprobs[k] - inner) / eps;
    return dlogits;
}

OptimizerState OptimizerState::init(const ModelParams& p, double base_lr,
                                    std::size_t total_steps, double momentum,
                                    double weight_decay) {
    OptimizerState s;
    s.velocity = ParamGrads::zeros_like(p);
    s.base_lr = base_lr;
    s.total_steps = total_steps;
    s.momentum = momentum;
    s.weight_decay = weight_decay;
    return s;
}

double cosine_lr(std::size_t t, std::size_t total, double eta0) {
    if (t > total) throw std::out_of_range("cosine_lr: t > T");
    constexpr double pi = 3.14159265358979323846;
    return eta0 * 0.5 * (1.0 + std::cos(pi * static_cast<double>(t) / static_cast<double>(total)));
}

namespace {

void sgd_apply(std::vector<double>& param, std::vector<double>& vel,
               const std::vector<double>& grad, double momentum, double wd, double lr) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        if (!std::isfinite(grad[i])) throw NumericError("sgd_step: non-finite gradient");
        vel[i] = momentum * vel[i] + (grad[i] + wd * param[i]);
        param[i] -= lr * vel[i];
    }
}

}  // namespace

void sgd_step(ModelParams& params, OptimizerState& opt, const ParamGrads& grads) {
    const double lr = cosine_lr(opt.step, opt.total_steps, opt.base_lr);
    for (std::size_t l = 0; l < params.extractor.size(); ++l) {
        sgd_apply(params.extractor[l].weight.values, opt.velocity.weight[l].values,
                  grads.weight[l].values, opt.momentum, opt.weight_decay, lr);
        sgd_apply(params.extractor[l].bias, opt.velocity.bias[l], grads.bias[l],
                  opt.momentum, opt.weight_decay, lr);
    }
    sgd_apply(params.head.values, opt.velocity.head.values, grads.head.values,
              opt.momentum, opt.weight_decay, lr);
    ++opt.step;
}

namespace {

void ema_apply(std::vector<double>& teacher, const std::vector<double>& student, double d) {
    if (teacher.size() != student.size()) throw DimensionError("ema_update: shape mismatch");
    for (std::size_t i = 0; i < teacher.size(); ++i)
        teacher[i] = d * teacher[i] + (1.0 - d) * student[i];
}

}  // namespace

void ema_update(TeacherParams& teacher, const ModelParams& student) {
    if (teacher.params.extractor.size() != student.extractor.size())
        throw DimensionError("ema_update: layer count mismatch");
    const double d = teacher.ema_decay;
    for (std::size_t l = 0; l < student.extractor.size(); ++l) {
        ema_apply(teacher.params.extractor[l].weight.values,
                  student.extractor[l].weight.values, d);
        ema_apply(teacher.params.extractor[l].bias, student.extractor[l].bias, d);
    }
    ema_apply(teacher.params.head.values, student.head.values, d);
}

std::vector<ForwardResult> batch_forward_serial(const ModelParams& params,
                                                std::span<const Vector> xs, double eps) {
    std::vector<ForwardResult> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = forward(params, xs[i], eps);
    return out;
}

std::vector<ForwardResult> batch_forward(const ModelParams& params,
                                         std::span<const Vector> xs, double eps) {
    std::vector<ForwardResult> out(xs.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(xs.size()); ++i)
        out[i] = forward(params, xs[i], eps);
    return out;
}

ParamGrads batch_backward_serial(const ModelParams& params, std::span<const Vector> xs,
                                 std::span<const Vector> dlogits) {
    if (xs.size() != dlogits.size()) throw DimensionError("batch_backward: size mismatch");
    ParamGrads total = ParamGrads::zeros_like(params);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        ForwardCache c = forward_cached(params, xs[i]);
        total.add(backward(params, c, dlogits[i]));
    }
    return total;
}

ParamGrads batch_backward(const ModelParams& params, std::span<const Vector> xs,
                          std::span<const Vector> dlogits) {
    if (xs.size() != dlogits.size()) throw DimensionError("batch_backward: size mismatch");
    std::vector<ParamGrads> per_sample(xs.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(xs.size()); ++i) {
        ForwardCache c = forward_cached(params, xs[i]);
        per_sample[i] = backward(params, c, dlogits[i]);
    }
    // ordered reduction keeps the result independent of the thread count
    ParamGrads total = ParamGrads::zeros_like(params);
    for (const ParamGrads& g : per_sample) total.add(g);
    return total;
}

}  // namespace otmatch::nn
