#include "neuroddaf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "neuroddaf/fusion.hpp"
#include "neuroddaf/rng.hpp"

namespace neuroddaf::train {

ad::Var pde_residual_loss(ad::Tape& tape, ad::Var y, const Tensor& laplacian,
                          const Tensor& advection, ad::Var diffusion, double dt) {
    const Tensor& v = tape.val(y);
    int tau = v.rows(), n = v.cols();
    if (tau < 2) throw std::invalid_argument("pde_residual_loss: need tau >= 2");
    if (laplacian.rows() != n || advection.rows() != n)
        throw std::invalid_argument("pde_residual_loss: operator size mismatch");
    if (dt <= 0.0) throw std::invalid_argument("pde_residual_loss: dt must be positive");
    // Row blocks Y[0..tau-2] and Y[1..tau-1] via flatten + column slices.
    ad::Var flat = tape.reshape(y, 1, tau * n);
    ad::Var y_lo = tape.reshape(tape.slice_cols(flat, 0, (tau - 1) * n), tau - 1, n);
    ad::Var y_hi = tape.reshape(tape.slice_cols(flat, n, tau * n), tau - 1, n);
    // Residual rows: (Y_{t+1} - Y_t)/dt + D L Y_t - M Y_t, states as rows so
    // the operators apply transposed from the right.
    ad::Var ddt = tape.scale(tape.sub(y_hi, y_lo), 1.0 / dt);
    ad::Var lterm = tape.scalar_mul(diffusion, tape.matmul_cr(y_lo, laplacian.transposed()));
    ad::Var mterm = tape.neg(tape.matmul_cr(y_lo, advection.transposed()));
    return tape.mean(tape.square_(tape.add3(ddt, lterm, mterm)));
}

double pde_residual_value(const Tensor& y, const Tensor& laplacian,
                          const Tensor& advection, double diffusion, double dt) {
    int tau = y.rows(), n = y.cols();
    if (tau < 2) throw std::invalid_argument("pde_residual_value: need tau >= 2");
    double acc = 0.0;
    for (int t = 0; t + 1 < tau; ++t)
        for (int i = 0; i < n; ++i) {
            double op = 0.0;
            for (int j = 0; j < n; ++j)
                op += (diffusion * laplacian(i, j) - advection(i, j)) * y(t, j);
            double r = (y(t + 1, i) - y(t, i)) / dt + op;
            acc += r * r;
        }
    return acc / (static_cast<double>(tau - 1) * n);
}

LossParts total_loss(ad::Tape& tape, const model::ForwardResult& fwd, const Tensor& y_true,
                     const model::GraphContext& gc, const model::ModelConfig& mcfg,
                     const TrainConfig& cfg) {
    if (!tape.val(fwd.y_mean).same_shape(y_true))
        throw std::invalid_argument("total_loss: target shape mismatch");
    LossParts out;
    ad::Var target = tape.leaf(y_true);
    ad::Var forecast = tape.mean(tape.abs_(tape.sub(fwd.y_mean, target)));
    out.forecast = tape.val(forecast)(0, 0);
    ad::Var total = forecast;

    if (cfg.lambda_phys > 0.0 && y_true.rows() >= 2) {
        ad::Var pde = pde_residual_loss(tape, fwd.y_mean, gc.laplacian, gc.advection,
                                        fwd.diffusion, mcfg.dt);
        out.pde = tape.val(pde)(0, 0);
        total = tape.axpy(cfg.lambda_phys, pde, total);
    }

    if (cfg.lambda_unc > 0.0) {
        ad::Var unc{};
        bool have = false;
        if (fwd.has_nig) {
            unc = fusion::evidential_loss(tape, fwd.nig, y_true, cfg.lambda_reg);
            have = true;
        }
        if (!fwd.aleatoric.empty()) {
            // Heteroscedastic Gaussian NLL per sample, averaged; calibrates
            // the aleatoric head that feeds the prediction intervals.
            int s_count = static_cast<int>(fwd.aleatoric.size());
            ad::Var acc{};
            for (int s = 0; s < s_count; ++s) {
                ad::Var var = fwd.aleatoric[s];
                ad::Var sq = tape.square_(tape.sub(fwd.y_samples[s], target));
                ad::Var nll = tape.scale(tape.mean(tape.add(tape.log_(var), tape.div(sq, var))), 0.5);
                acc = s == 0 ? nll : tape.add(acc, nll);
            }
            acc = tape.scale(acc, 1.0 / s_count);
            unc = have ? tape.add(unc, acc) : acc;
            have = true;
        }
        if (have) {
            out.evidential = tape.val(unc)(0, 0);
            total = tape.axpy(cfg.lambda_unc, unc, total);
        }
    }
    out.total = total;
    return out;
}

void adam_step(model::ParamStore& params, AdamState& state, const TrainConfig& cfg, double lr) {
    for (int i = 0; i < params.count(); ++i) {
        const model::ParamStore::Entry& e = params.at(i);
        if (!e.grad.finite())
            throw std::runtime_error("adam_step: non-finite gradient for " + e.name);
    }
    double norm = params.grad_global_norm();
    double clip = norm > cfg.grad_clip_norm && norm > 0.0 ? cfg.grad_clip_norm / norm : 1.0;
    ++state.step;
    double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
    double bc2 = 1.0 - std::pow(cfg.beta2, state.step);
    for (int i = 0; i < params.count(); ++i) {
        model::ParamStore::Entry& e = params.at(i);
        for (std::size_t q = 0; q < e.value.size(); ++q) {
            double g = clip * e.grad[q];
            e.adam_m[q] = cfg.beta1 * e.adam_m[q] + (1.0 - cfg.beta1) * g;
            e.adam_v[q] = cfg.beta2 * e.adam_v[q] + (1.0 - cfg.beta2) * g * g;
            double mhat = e.adam_m[q] / bc1;
            double vhat = e.adam_v[q] / bc2;
            e.value[q] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

namespace {

std::vector<Tensor> window_inputs(const dataio::WindowedDataset& ds, int w) {
    Tensor x = ds.input_pm25(w); // T x N
    std::vector<Tensor> steps;
    steps.reserve(ds.T);
    for (int t = 0; t < ds.T; ++t) {
        Tensor col(x.cols(), 1);
        for (int j = 0; j < x.cols(); ++j) col(j, 0) = x(t, j);
        steps.push_back(std::move(col));
    }
    return steps;
}

Tensor denorm_matrix(const Tensor& y, const dataio::NormStats& norm) {
    Tensor out = y;
    for (int t = 0; t < out.rows(); ++t)
        for (int j = 0; j < out.cols(); ++j)
            out(t, j) = dataio::denormalize(out(t, j), norm, j);
    return out;
}

} // namespace

namespace {

// Lookup of the graph context for the window starting at `start`.
using ContextLookup = std::function<const model::GraphContext&(int start)>;

EvalResult evaluate_impl(const model::Model& m, const dataio::WindowedDataset& ds,
                         const ContextLookup& ctx, std::uint64_t seed, int stride) {
    if (ds.count() == 0) throw std::invalid_argument("evaluate: empty dataset");
    if (stride < 1) stride = 1;
    EvalResult res;
    double abs_sum = 0.0, sq_sum = 0.0;
    long covered = 0, points = 0;
    double q90 = fusion::normal_quantile(0.95);
    for (int w = 0; w < ds.count(); w += stride) {
        ad::Tape tape;
        Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (w + 1)));
        const model::GraphContext& gc = ctx(ds.windows[w].start);
        model::ForwardResult fwd = m.forward(tape, window_inputs(ds, w), gc, rng, false);
        std::vector<Tensor> members, alea;
        for (ad::Var v : fwd.y_samples) members.push_back(tape.val(v));
        for (ad::Var v : fwd.aleatoric) alea.push_back(tape.val(v));
        fusion::EnsembleStats st =
            fusion::ensemble_stats(members, alea.empty() ? nullptr : &alea);
        Tensor truth = denorm_matrix(ds.target_pm25(w), ds.norm);
        for (int t = 0; t < truth.rows(); ++t)
            for (int j = 0; j < truth.cols(); ++j) {
                double sd = ds.norm.std[j];
                double mean = dataio::denormalize(st.mean(t, j), ds.norm, j);
                double var = st.var_total(t, j) * sd * sd;
                double e = mean - truth(t, j);
                abs_sum += std::fabs(e);
                sq_sum += e * e;
                double hw = q90 * std::sqrt(var);
                if (truth(t, j) >= mean - hw && truth(t, j) <= mean + hw) ++covered;
                ++points;
            }
    }
    res.points = static_cast<int>(points);
    res.mae = abs_sum / points;
    res.rmse = std::sqrt(sq_sum / points);
    res.coverage90 = static_cast<double>(covered) / points;
    return res;
}

// Origin-time lookup into a wind-aware context series, clamped to the last
// step the segment actually has wind for.
ContextLookup origin_lookup(const model::GraphContextSeries& ctxs, int T) {
    return [&ctxs, T](int start) -> const model::GraphContext& {
        int t = start + T - 1;
        if (t >= ctxs.steps()) t = ctxs.steps() - 1;
        return ctxs.at(t);
    };
}

} // namespace

EvalResult evaluate(const model::Model& m, const dataio::WindowedDataset& ds,
                    const model::GraphContext& gc, std::uint64_t seed, int stride) {
    return evaluate_impl(
        m, ds, [&gc](int) -> const model::GraphContext& { return gc; }, seed, stride);
}

EvalResult evaluate(const model::Model& m, const dataio::WindowedDataset& ds,
                    const graphnet::DynamicGraph& topology, std::uint64_t seed, int stride) {
    model::GraphContextSeries ctxs(topology, ds.series);
    return evaluate_impl(m, ds, origin_lookup(ctxs, ds.T), seed, stride);
}

double persistence_mae(const dataio::WindowedDataset& ds, int stride) {
    if (ds.count() == 0) throw std::invalid_argument("persistence_mae: empty dataset");
    if (stride < 1) stride = 1;
    double abs_sum = 0.0;
    long points = 0;
    for (int w = 0; w < ds.count(); w += stride) {
        Tensor x = ds.input_pm25(w);
        Tensor y = ds.target_pm25(w);
        for (int t = 0; t < y.rows(); ++t)
            for (int j = 0; j < y.cols(); ++j) {
                double pred = dataio::denormalize(x(ds.T - 1, j), ds.norm, j);
                double truth = dataio::denormalize(y(t, j), ds.norm, j);
                abs_sum += std::fabs(pred - truth);
                ++points;
            }
    }
    return abs_sum / points;
}

double linear_baseline_mae(const dataio::WindowedDataset& train,
                           const dataio::WindowedDataset& test, int stride) {
    if (train.count() == 0 || test.count() == 0)
        throw std::invalid_argument("linear_baseline_mae: empty split");
    if (stride < 1) stride = 1;
    int n = train.series.n_stations(), tau = train.tau;
    // Per-station, per-horizon least squares y ~ a*x + b on the last input.
    Tensor a(tau, n), b(tau, n);
    for (int j = 0; j < n; ++j)
        for (int h = 0; h < tau; ++h) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            int cnt = 0;
            for (int w = 0; w < train.count(); w += stride) {
                double x = dataio::denormalize(train.input_pm25(w)(train.T - 1, j), train.norm, j);
                double y = dataio::denormalize(train.target_pm25(w)(h, j), train.norm, j);
                sx += x;
                sy += y;
                sxx += x * x;
                sxy += x * y;
                ++cnt;
            }
            double denom = cnt * sxx - sx * sx;
            a(h, j) = std::fabs(denom) > 1e-12 ? (cnt * sxy - sx * sy) / denom : 0.0;
            b(h, j) = (sy - a(h, j) * sx) / cnt;
        }
    double abs_sum = 0.0;
    long points = 0;
    for (int w = 0; w < test.count(); w += stride) {
        Tensor x = test.input_pm25(w);
        Tensor y = test.target_pm25(w);
        for (int h = 0; h < tau; ++h)
            for (int j = 0; j < n; ++j) {
                double xv = dataio::denormalize(x(test.T - 1, j), test.norm, j);
                double truth = dataio::denormalize(y(h, j), test.norm, j);
                abs_sum += std::fabs(a(h, j) * xv + b(h, j) - truth);
                ++points;
            }
    }
    return abs_sum / points;
}

namespace {

FitResult fit_impl(model::Model& m, const dataio::SplitResult& data,
                   const ContextLookup& train_ctx, const ContextLookup& val_ctx,
                   const TrainConfig& cfg) {
    if (data.train.count() == 0 || data.val.count() == 0)
        throw std::invalid_argument("fit: empty train or val split");
    FitResult res;
    AdamState adam;
    Rng rng(cfg.seed);
    const model::ModelConfig& mcfg = m.config();

    std::vector<int> order;
    for (int w = 0; w < data.train.count(); w += std::max(1, cfg.window_stride))
        order.push_back(w);

    std::vector<Tensor> best_values;
    double best_val = 0.0;
    int best_epoch = -1, since_best = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto t_start = std::chrono::steady_clock::now();
        double lr = cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_epochs);
        // Seeded Fisher-Yates shuffle of the window order.
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            int j = static_cast<int>(rng.uniform() * (i + 1));
            std::swap(order[i], order[std::min(j, i)]);
        }
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            std::size_t end = std::min(pos + cfg.batch_size, order.size());
            m.params().zero_grads();
            double batch_loss = 0.0;
            for (std::size_t k = pos; k < end; ++k) {
                int w = order[k];
                ad::Tape tape;
                Rng wrng = rng.spawn();
                const model::GraphContext& gc = train_ctx(data.train.windows[w].start);
                model::ForwardResult fwd =
                    m.forward(tape, window_inputs(data.train, w), gc, wrng, true);
                LossParts loss =
                    total_loss(tape, fwd, data.train.target_pm25(w), gc, mcfg, cfg);
                tape.backward(loss.total);
                double inv = 1.0 / static_cast<double>(end - pos);
                for (int i = 0; i < m.params().count(); ++i) {
                    const Tensor& g = tape.grad(fwd.bound.vars[i]);
                    Tensor& acc = m.params().at(i).grad;
                    for (std::size_t q = 0; q < acc.size(); ++q) acc[q] += inv * g[q];
                }
                batch_loss += inv * tape.val(loss.total)(0, 0);
            }
            adam_step(m.params(), adam, cfg, lr);
            loss_sum += batch_loss;
            ++batches;
        }

        EvalResult val =
            evaluate_impl(m, data.val, val_ctx, cfg.seed + 1, std::max(1, cfg.window_stride));
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = batches ? loss_sum / batches : 0.0;
        rec.val_mae = val.mae;
        rec.val_rmse = val.rmse;
        rec.lr = lr;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        res.history.epochs.push_back(rec);

        if (best_epoch < 0 || val.mae < best_val) {
            best_val = val.mae;
            best_epoch = epoch;
            since_best = 0;
            best_values.clear();
            for (int i = 0; i < m.params().count(); ++i)
                best_values.push_back(m.params().at(i).value);
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    if (best_epoch >= 0)
        for (int i = 0; i < m.params().count(); ++i) m.params().at(i).value = best_values[i];
    res.history.best_epoch = best_epoch;
    res.history.best_val_mae = best_val;
    return res;
}

} // namespace

FitResult fit(model::Model& m, const dataio::SplitResult& data,
              const model::GraphContext& gc, const TrainConfig& cfg) {
    ContextLookup fixed = [&gc](int) -> const model::GraphContext& { return gc; };
    return fit_impl(m, data, fixed, fixed, cfg);
}

FitResult fit(model::Model& m, const dataio::SplitResult& data,
              const graphnet::DynamicGraph& topology, const TrainConfig& cfg) {
    model::GraphContextSeries train_ctxs(topology, data.train.series);
    model::GraphContextSeries val_ctxs(topology, data.val.series);
    return fit_impl(m, data, origin_lookup(train_ctxs, data.train.T),
                    origin_lookup(val_ctxs, data.val.T), cfg);
}

void write_history_csv(const std::string& path, const TrainHistory& h) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    // Wall time deliberately excluded: history files must be byte-identical
    // across same-seed runs.
    out << "epoch,train_loss,val_mae,val_rmse,lr\n";
    for (const EpochRecord& r : h.epochs)
        out << r.epoch << ',' << dataio::format_double(r.train_loss) << ','
            << dataio::format_double(r.val_mae) << ',' << dataio::format_double(r.val_rmse)
            << ',' << dataio::format_double(r.lr) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
}

} // namespace neuroddaf::train
