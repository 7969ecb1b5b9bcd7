// Acceptance suite: one self-contained check per shipping criterion,
// printing exactly one PASS/FAIL line each. Exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "san/aggregation.hpp"
#include "san/data_io.hpp"
#include "san/model.hpp"
#include "san/theory.hpp"

using namespace san;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s %s (%s)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    if (!ok) ++failures;
}

void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
        auto [o, d] = fn();
        ok = o;
        detail = d;
    } catch (const std::exception& e) {
        detail = std::string("unexpected exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2fs", secs);
    report(name, ok, detail + ", " + buf);
}

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double margin = 0.0) {
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    Tensor t({r, c});
    for (std::size_t i = 0; i < t.size(); ++i) {
        do {
            t[i] = dist(rng);
        } while (margin > 0.0 && std::abs(t[i]) < margin);
    }
    return t;
}

Tensor permuted_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t c = 0; c < x.cols(); ++c) out.at(i, c) = x.at(perm[i], c);
    return out;
}

bool rel_close(const Tensor& a, const Tensor& b, double tol, double& worst) {
    bool ok = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double err = std::abs(a[i] - b[i]) / std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, err);
        if (err >= tol) ok = false;
    }
    return ok;
}

std::pair<bool, std::string> permutation_invariance() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    ModelConfig mcfg;
    mcfg.extractor = ExtractorKind::mlp;
    mcfg.input_dim = 3;
    mcfg.mlp_widths = {6};
    mcfg.aggregator = AggregatorKind::san;
    mcfg.san_outputs = 8;
    mcfg.class_count = 3;
    Model model(mcfg, 101);

    for (int rep = 0; rep < 1000; ++rep) {
        std::size_t n = 1 + rng() % 12;
        Tensor x = random_matrix(n, 3, rng);
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng);
        FeatureSet a(x), b(permuted_rows(x, perm));

        SanLayer layer = SanLayer::glorot(8, 3, Activation::relu, rng());
        Tensor sa = san_aggregate(a, layer), sb = san_aggregate(b, layer);
        for (std::size_t i = 0; i < sa.size(); ++i)
            worst = std::max(worst, std::abs(sa[i] - sb[i]));
        for (PoolKind kind : {PoolKind::max, PoolKind::avg, PoolKind::sum}) {
            Tensor pa = pool(a, kind), pb = pool(b, kind);
            for (std::size_t i = 0; i < pa.size(); ++i)
                worst = std::max(worst, std::abs(pa[i] - pb[i]));
        }
        Tensor la = model.forward(a), lb = model.forward(b);
        for (std::size_t i = 0; i < la.size(); ++i)
            worst = std::max(worst, std::abs(la[i] - lb[i]));
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "1000 pairs, max deviation %.3g", worst);
    return {worst <= 1e-9, buf};
}

std::pair<bool, std::string> gradient_suite() {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    bool ok = true;

    // 50 cases: SAN layer alone
    for (int rep = 0; rep < 50; ++rep) {
        Tensor x = random_matrix(4, 2, rng, 1e-3);
        Tensor w = random_matrix(3, 2, rng, 1e-3);
        Tensor b({3});
        Tape tape;
        auto xs = tape.leaf(x), ws = tape.leaf(w), bs = tape.leaf(b);
        tape.backward(tape.sum_all(san_aggregate(tape, xs, ws, bs, Activation::relu)));
        auto loss_at = [&](Tensor* slot, const Tensor& probe, Tensor original) {
            *slot = probe;
            Tape t;
            double v = t.value(t.sum_all(san_aggregate(t, t.leaf(x), t.leaf(w), t.leaf(b),
                                                       Activation::relu)))[0];
            *slot = std::move(original);
            return v;
        };
        ok &= rel_close(tape.grad(ws),
                        finite_diff_gradient(
                            [&](const Tensor& p) { return loss_at(&w, p, w); }, w, 1e-5),
                        1e-4, worst);
        ok &= rel_close(tape.grad(xs),
                        finite_diff_gradient(
                            [&](const Tensor& p) { return loss_at(&x, p, x); }, x, 1e-5),
                        1e-4, worst);
    }

    // 50 cases: full extractor + aggregation + head model
    for (int rep = 0; rep < 50; ++rep) {
        ModelConfig cfg;
        cfg.extractor = ExtractorKind::mlp;
        cfg.input_dim = 2;
        cfg.mlp_widths = {5};
        cfg.aggregator = AggregatorKind::san;
        cfg.san_outputs = 4;
        cfg.class_count = 3;
        Model model(cfg, rng());
        // jitter every parameter so no pre-activation sits exactly on a
        // ReLU kink (freshly initialized biases are zero, and a row whose
        // extractor output is all zeros would otherwise land on one)
        std::uniform_real_distribution<double> jitter(0.05, 0.25);
        for (Parameter& p : model.parameters())
            for (std::size_t q = 0; q < p.value.size(); ++q)
                p.value[q] += (rng() % 2 ? 1.0 : -1.0) * jitter(rng);
        FeatureSet set(random_matrix(5, 2, rng, 1e-3));
        int label = static_cast<int>(rng() % 3);

        Tape tape;
        auto ids = model.bind_parameters(tape);
        tape.backward(
            tape.softmax_cross_entropy(model.forward_on_tape(tape, set, ids), {&label, 1}));
        for (std::size_t p = 0; p < model.parameters().size(); ++p) {
            Tensor original = model.parameters()[p].value;
            auto f = [&](const Tensor& probe) {
                model.parameters()[p].value = probe;
                Tape t;
                auto pids = model.bind_parameters(t);
                double v = t.value(t.softmax_cross_entropy(
                    model.forward_on_tape(t, set, pids), {&label, 1}))[0];
                model.parameters()[p].value = original;
                return v;
            };
            ok &= rel_close(tape.grad(ids[p]), finite_diff_gradient(f, original, 1e-5), 1e-4,
                            worst);
        }
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "100 cases, max relative error %.3g vs tolerance 1e-4",
                  worst);
    return {ok, buf};
}

std::pair<bool, std::string> injectivity() {
    std::vector<std::vector<double>> universe;
    for (int a = 0; a < 10; ++a)
        for (int b = a + 1; b < 10; ++b)
            universe.push_back({static_cast<double>(a), static_cast<double>(b)});

    std::size_t prev = universe.size() * universe.size();
    std::size_t at64 = prev;
    bool monotone = true;
    for (std::size_t m : {4, 16, 64}) {
        CollisionReport r = injectivity_check(universe, m, 2024, 64);
        if (r.pairs_tested != 990) return {false, "expected 990 pairs"};
        monotone &= r.collisions <= prev;
        prev = r.collisions;
        if (m == 64) at64 = r.collisions;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "45 sets, %zu collisions at M=64, counts monotone over M in {4,16,64}", at64);
    return {at64 == 0 && monotone, buf};
}

std::pair<bool, std::string> max_limit() {
    std::vector<double> values;
    for (int i = 1; i <= 10; ++i) values.push_back(i);
    std::vector<double> sched = {2.0, 10.0, 50.0, 256.0};
    auto perr = maxlimit_convergence_check(values, sched, MaxApproxMode::power);
    auto lerr = maxlimit_convergence_check(values, sched, MaxApproxMode::log_sum_exp);
    bool ok = true;
    for (std::size_t i = 0; i < sched.size(); ++i) {
        ok &= perr[i] <= 10.0 * (std::pow(10.0, 1.0 / sched[i]) - 1.0) + 1e-12;
        ok &= lerr[i] <= std::log(10.0) / sched[i] + 1e-12;
        if (i > 0) ok &= perr[i] < perr[i - 1];
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "power error %.3g at p=256 (bound %.3g), errors decreasing",
                  perr.back(), 10.0 * (std::pow(10.0, 1.0 / 256.0) - 1.0));
    return {ok, buf};
}

std::pair<bool, std::string> profile_recovery() {
    std::mt19937_64 rng(303);
    const double h = 0.25;
    std::vector<double> grid;
    for (double b = -5.0; b <= 5.0 + h / 2; b += h) grid.push_back(b);
    for (int rep = 0; rep < 50; ++rep) {
        std::size_t n = 1 + rng() % 6;
        std::vector<double> s(n);
        for (double& v : s)
            v = h * static_cast<double>(static_cast<long>(rng() % 33) - 16);  // |s| <= 4
        ProfileReport r = relu_profile(s, 1.0, grid);
        auto rec = recover_1d_set(r, h);
        if (rec.size() != n) return {false, "wrong multiplicity on case " + std::to_string(rep)};
        std::sort(rec.begin(), rec.end());
        std::sort(s.begin(), s.end());
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs(rec[i] - s[i]) > h)
                return {false, "element off by more than one grid step"};
        double tol = 2.0 * h * static_cast<double>(n);
        ProfileReport again = relu_profile(rec, 1.0, grid);
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (std::abs(again.values[i] - r.values[i]) > tol)
                return {false, "reprofiled curve outside tolerance"};
    }
    return {true, "50 sets recovered within one 0.25 grid step, multiplicities exact"};
}

LabeledDataset blobs(std::size_t count, std::pair<std::size_t, std::size_t> n_range,
                     std::uint64_t seed) {
    BlobSpec spec;
    spec.centers = {{-2.0, -2.0}, {2.0, 2.0}};
    spec.spread = 0.5;
    spec.n_range = n_range;
    return gen_blob_sets(spec, count, seed);
}

ModelConfig blob_config(AggregatorKind kind) {
    ModelConfig cfg;
    cfg.extractor = ExtractorKind::mlp;
    cfg.input_dim = 2;
    cfg.mlp_widths = {8};
    cfg.aggregator = kind;
    cfg.san_outputs = 16;
    cfg.class_count = 2;
    return cfg;
}

std::pair<bool, std::string> varied_cardinality() {
    LabeledDataset data = blobs(200, {5, 20}, 404);
    Model model(blob_config(AggregatorKind::san), 404);
    TrainConfig tc;
    tc.epochs = 15;
    tc.batch_size = 16;
    tc.seed = 404;
    train(model, data, tc);

    // out-of-range cardinalities must evaluate without error
    std::mt19937_64 rng(405);
    for (std::size_t n : {1, 4, 50}) {
        Tensor logits = model.forward(FeatureSet(random_matrix(n, 2, rng)));
        if (!logits.all_finite()) return {false, "non-finite logits at n=" + std::to_string(n)};
    }

    LabeledDataset test = blobs(200, {5, 20}, 500);
    EvalResult r = evaluate(model, test);
    if (r.accuracy < 0.95) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "test accuracy %.4f < 0.95", r.accuracy);
        return {false, buf};
    }

    ModelConfig fcfg = blob_config(AggregatorKind::flatten);
    fcfg.fixed_cardinality = 5;
    Model fmodel(fcfg, 404);
    bool threw = false;
    try {
        train(fmodel, data, tc);
    } catch (const contract_error&) {
        threw = true;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "test accuracy %.4f, n in {1,4,50} finite, flatten raised the contract error",
                  r.accuracy);
    return {threw, buf};
}

std::pair<bool, std::string> training_sanity() {
    LabeledDataset data = blobs(200, {5, 20}, 77);
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 16;
    tc.seed = 77;

    Model a(blob_config(AggregatorKind::san), 77);
    auto ma = train(a, data, tc);
    double final_acc = ma.back().accuracy;
    if (final_acc < 0.99) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "train accuracy %.4f < 0.99", final_acc);
        return {false, buf};
    }

    Model b(blob_config(AggregatorKind::san), 77);
    auto mb = train(b, data, tc);
    fs::path dir = fs::temp_directory_path() / ("san_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    write_metrics_csv(ma, (dir / "a.csv").string());
    write_metrics_csv(mb, (dir / "b.csv").string());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    bool identical = !slurp(dir / "a.csv").empty() && slurp(dir / "a.csv") == slurp(dir / "b.csv");
    fs::remove_all(dir);
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "train accuracy %.4f in 20 epochs, repeated run byte-identical", final_acc);
    return {identical, buf};
}

std::pair<bool, std::string> idx_and_resize() {
    fs::path dir = fs::temp_directory_path() / ("san_accept_io_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::vector<Tensor> images;
    std::vector<int> labels = {3, 8, 0};
    for (int i = 0; i < 3; ++i) {
        Tensor t({4, 5, 1});
        for (std::size_t j = 0; j < t.size(); ++j)
            t[j] = static_cast<double>((j * 13 + static_cast<std::size_t>(i) * 7) % 256) / 255.0;
        images.push_back(t);
    }
    write_idx(images, labels, (dir / "im.idx").string(), (dir / "lb.idx").string());
    LabeledDataset ds = load_idx((dir / "im.idx").string(), (dir / "lb.idx").string());
    fs::remove_all(dir);

    bool ok = ds.size() == 3;
    for (std::size_t i = 0; ok && i < 3; ++i) {
        ok &= ds.labels[i] == labels[i];
        const Tensor& got = std::get<Tensor>(ds.samples[i]);
        for (std::size_t j = 0; j < got.size(); ++j) ok &= got[j] == images[i][j];
    }
    if (!ok) return {false, "idx round trip not exact"};

    Tensor img({3, 3, 2});
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i) / 20.0;
    Tensor constant({3, 3, 1});
    for (std::size_t i = 0; i < constant.size(); ++i) constant[i] = 0.6;
    for (ResizeMethod m : {ResizeMethod::bilinear, ResizeMethod::bicubic}) {
        Tensor same = resize_image(img, 3, 3, m);
        for (std::size_t i = 0; i < img.size(); ++i) ok &= same[i] == img[i];
        Tensor scaled = resize_image(constant, 7, 5, m);
        for (std::size_t i = 0; i < scaled.size(); ++i) ok &= std::abs(scaled[i] - 0.6) <= 1e-12;
    }
    return {ok, "idx round trip exact, identity and constant resize exact for both methods"};
}

}  // namespace

int main() {
    criterion("permutation-invariance", permutation_invariance);
    criterion("gradient-suite", gradient_suite);
    criterion("empirical-injectivity", injectivity);
    criterion("max-limit-convergence", max_limit);
    criterion("profile-recovery", profile_recovery);
    criterion("varied-cardinality-sanity", varied_cardinality);
    criterion("training-sanity", training_sanity);
    criterion("idx-and-resize", idx_and_resize);
    return failures == 0 ? 0 : 1;
}
