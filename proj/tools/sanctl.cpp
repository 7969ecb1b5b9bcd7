// Command-line driver: training/eval runs across aggregators, gradient
// checks, and the theory verification commands (injectivity, maxlimit,
// profile). Config is a flat key=value file; trailing key=value args
// override it (last one wins).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "san/data_io.hpp"
#include "san/errors.hpp"
#include "san/model.hpp"
#include "san/theory.hpp"

namespace fs = std::filesystem;
using namespace san;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;
constexpr int kExitTraining = 4;

struct config_exit : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const std::set<std::string> kKnownKeys = {
    "aggregator",     "san_outputs",    "activation",       "positional",
    "sinusoidal_dims", "dataset",       "idx_images",       "idx_labels",
    "idx_test_images", "idx_test_labels",
    "count",          "n_min",          "n_max",            "mlp_widths",
    "conv_channels",  "fixed_cardinality",
    "lr",             "batch_size",     "epochs",           "seed",
    "validation_fraction", "output_dir",
    "injectivity_m",  "maxlimit_p",     "profile_set",      "grid_step",
    "gradcheck_cases",
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

using Config = std::map<std::string, std::string>;

void set_entry(Config& cfg, const std::string& entry, const std::string& where) {
    std::size_t eq = entry.find('=');
    if (eq == std::string::npos) {
        throw config_exit("malformed entry '" + entry + "' in " + where + " (expected key=value)");
    }
    std::string key = trim(entry.substr(0, eq));
    std::string value = trim(entry.substr(eq + 1));
    if (!kKnownKeys.count(key)) {
        throw config_exit("unknown config key '" + key + "'");
    }
    cfg[key] = value;  // last wins
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw config_exit("cannot open config file " + path);
    Config cfg;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        set_entry(cfg, t, path);
    }
    for (const std::string& o : overrides) set_entry(cfg, o, "command line");
    return cfg;
}

std::string require(const Config& cfg, const std::string& key) {
    auto it = cfg.find(key);
    if (it == cfg.end()) throw config_exit("missing required config key '" + key + "'");
    return it->second;
}

std::string get_or(const Config& cfg, const std::string& key, const std::string& fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
}

long parse_long(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw config_exit("config key '" + key + "' expects an integer, got '" + value + "'");
    }
}

double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw config_exit("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

std::vector<double> parse_list(const std::string& value, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), key));
    if (out.empty()) throw config_exit("config key '" + key + "' expects a comma-separated list");
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& value, const std::string& key) {
    std::vector<std::size_t> out;
    for (double v : parse_list(value, key)) {
        if (v < 1 || v != std::floor(v))
            throw config_exit("config key '" + key + "' expects positive integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

struct Run {
    Config cfg;
    fs::path output_dir;
    std::ofstream summary;

    explicit Run(Config c) : cfg(std::move(c)) {
        output_dir = require(cfg, "output_dir");
        fs::create_directories(output_dir);
        summary.open(output_dir / "summary.txt");
        if (!summary) throw io_error("cannot write to " + (output_dir / "summary.txt").string());
    }

    std::string out(const std::string& name) const { return (output_dir / name).string(); }

    void note(const std::string& line) {
        summary << line << '\n';
        std::cout << line << '\n';
    }
};

ModelConfig model_config_from(const Config& cfg, const LabeledDataset& data) {
    ModelConfig mc;
    bool image_data = std::holds_alternative<Tensor>(data.samples.at(0));
    if (image_data) {
        mc.extractor = ExtractorKind::conv;
        mc.input_dim = std::get<Tensor>(data.samples[0]).shape()[2];
        mc.conv_channels = parse_size_list(get_or(cfg, "conv_channels", "8,16"), "conv_channels");
    } else {
        mc.extractor = ExtractorKind::mlp;
        mc.input_dim = std::get<FeatureSet>(data.samples[0]).feature_dim();
        mc.mlp_widths = parse_size_list(get_or(cfg, "mlp_widths", "8"), "mlp_widths");
    }
    try {
        mc.aggregator = aggregator_from_string(require(cfg, "aggregator"));
        mc.san_activation = activation_from_string(get_or(cfg, "activation", "relu"));
        mc.positional = positional_mode_from_string(get_or(cfg, "positional", "none"));
    } catch (const contract_error& e) {
        // bad enum values are config errors: re-raise naming the key
        std::string msg = e.what();
        std::string key = msg.find("aggregator") != std::string::npos ? "aggregator"
                          : msg.find("activation") != std::string::npos ? "activation"
                                                                        : "positional";
        throw config_exit("config key '" + key + "': " + msg);
    }
    mc.san_outputs = static_cast<std::size_t>(parse_long(get_or(cfg, "san_outputs", "64"),
                                                         "san_outputs"));
    mc.sinusoidal_dims = static_cast<std::size_t>(parse_long(get_or(cfg, "sinusoidal_dims", "4"),
                                                             "sinusoidal_dims"));
    mc.class_count = data.class_count;
    if (is_order_sensitive(mc.aggregator)) {
        mc.fixed_cardinality = static_cast<std::size_t>(
            parse_long(require(cfg, "fixed_cardinality"), "fixed_cardinality"));
    }
    return mc;
}

TrainConfig train_config_from(const Config& cfg) {
    TrainConfig tc;
    tc.lr = parse_double(get_or(cfg, "lr", "0.001"), "lr");
    tc.batch_size = static_cast<std::size_t>(parse_long(get_or(cfg, "batch_size", "32"),
                                                        "batch_size"));
    tc.epochs = static_cast<std::size_t>(parse_long(get_or(cfg, "epochs", "10"), "epochs"));
    tc.seed = static_cast<std::uint64_t>(parse_long(get_or(cfg, "seed", "0"), "seed"));
    tc.validation_fraction = parse_double(get_or(cfg, "validation_fraction", "0.1"),
                                          "validation_fraction");
    return tc;
}

LabeledDataset dataset_from(const Config& cfg, std::uint64_t seed_offset = 0) {
    std::string kind = get_or(cfg, "dataset", "blobs");
    std::uint64_t seed =
        static_cast<std::uint64_t>(parse_long(get_or(cfg, "seed", "0"), "seed")) + seed_offset;
    std::size_t count = static_cast<std::size_t>(parse_long(get_or(cfg, "count", "200"), "count"));
    std::size_t n_min = static_cast<std::size_t>(parse_long(get_or(cfg, "n_min", "5"), "n_min"));
    std::size_t n_max = static_cast<std::size_t>(parse_long(get_or(cfg, "n_max", "20"), "n_max"));
    if (kind == "blobs") {
        BlobSpec spec;
        spec.centers = {{-2.0, -2.0}, {2.0, 2.0}};
        spec.spread = 0.5;
        spec.n_range = {n_min, n_max};
        return gen_blob_sets(spec, count, seed);
    }
    if (kind == "ringblob") {
        return gen_ring_vs_blob({n_min, n_max}, count, seed);
    }
    if (kind == "idx") {
        return load_idx(require(cfg, "idx_images"), require(cfg, "idx_labels"));
    }
    throw config_exit("config key 'dataset' expects blobs|ringblob|idx, got '" + kind + "'");
}

char accuracy_buf[64];
std::string fmt(double v) {
    std::snprintf(accuracy_buf, sizeof(accuracy_buf), "%.6f", v);
    return accuracy_buf;
}

int cmd_train(Run& run, bool with_eval) {
    LabeledDataset data = dataset_from(run.cfg);
    Model model(model_config_from(run.cfg, data), train_config_from(run.cfg).seed);
    TrainConfig tc = train_config_from(run.cfg);
    auto metrics = train(model, data, tc);
    write_metrics_csv(metrics, run.out("metrics.csv"));
    if (!metrics.empty()) {
        for (auto it = metrics.rbegin(); it != metrics.rend(); ++it) {
            if (it->split == Split::train) {
                run.note("final train accuracy " + fmt(it->accuracy) + " loss " + fmt(it->loss));
                break;
            }
        }
        for (auto it = metrics.rbegin(); it != metrics.rend(); ++it) {
            if (it->split == Split::valid) {
                run.note("final valid accuracy " + fmt(it->accuracy) + " loss " + fmt(it->loss));
                break;
            }
        }
    }
    if (with_eval) {
        LabeledDataset test;
        if (get_or(run.cfg, "dataset", "blobs") == "idx" && run.cfg.count("idx_test_images")) {
            test = load_idx(require(run.cfg, "idx_test_images"),
                            require(run.cfg, "idx_test_labels"));
        } else {
            test = dataset_from(run.cfg, /*seed_offset=*/1);
        }
        EvalResult r = evaluate(model, test);
        std::vector<MetricsRecord> test_metrics = {
            {tc.epochs, Split::test, r.loss, r.accuracy}};
        write_metrics_csv(test_metrics, run.out("test_metrics.csv"));
        run.note("test accuracy " + fmt(r.accuracy) + " loss " + fmt(r.loss));
    }
    return 0;
}

int cmd_gradcheck(Run& run) {
    std::size_t cases = static_cast<std::size_t>(
        parse_long(get_or(run.cfg, "gradcheck_cases", "20"), "gradcheck_cases"));
    std::uint64_t seed = static_cast<std::uint64_t>(parse_long(get_or(run.cfg, "seed", "0"),
                                                               "seed"));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    double worst = 0.0;
    for (std::size_t rep = 0; rep < cases; ++rep) {
        ModelConfig mc;
        mc.extractor = ExtractorKind::mlp;
        mc.input_dim = 2;
        mc.mlp_widths = {6};
        mc.aggregator = AggregatorKind::san;
        mc.san_outputs = 4;
        mc.class_count = 3;
        Model model(mc, rng());

        Tensor elements({5, 2});
        for (std::size_t i = 0; i < elements.size(); ++i) {
            do {
                elements[i] = dist(rng);
            } while (std::abs(elements[i]) < 1e-3);
        }
        FeatureSet set(elements);
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
                double v = t.value(t.softmax_cross_entropy(model.forward_on_tape(t, set, pids),
                                                           {&label, 1}))[0];
                model.parameters()[p].value = original;
                return v;
            };
            Tensor fd = finite_diff_gradient(f, original, 1e-5);
            const Tensor& bp = tape.grad(ids[p]);
            for (std::size_t q = 0; q < fd.size(); ++q) {
                double err = std::abs(bp[q] - fd[q]) /
                             std::max({1.0, std::abs(bp[q]), std::abs(fd[q])});
                worst = std::max(worst, err);
            }
        }
    }
    run.note("gradcheck cases " + std::to_string(cases) + " max relative error " + fmt(worst));
    if (worst >= 1e-4) {
        run.note("gradcheck FAILED (tolerance 1e-4)");
        return 1;
    }
    return 0;
}

int cmd_injectivity(Run& run) {
    std::vector<std::vector<double>> universe;
    for (int a = 0; a < 10; ++a)
        for (int b = a + 1; b < 10; ++b)
            universe.push_back({static_cast<double>(a), static_cast<double>(b)});
    std::uint64_t seed = static_cast<std::uint64_t>(parse_long(get_or(run.cfg, "seed", "0"),
                                                               "seed"));
    std::vector<std::size_t> ms =
        parse_size_list(get_or(run.cfg, "injectivity_m", "4,16,64"), "injectivity_m");
    std::size_t pool = *std::max_element(ms.begin(), ms.end());

    std::ofstream csv(run.out("collisions.csv"));
    csv << "M,pairs,collisions,min_distance\n";
    CollisionReport last;
    for (std::size_t m : ms) {
        last = injectivity_check(universe, m, seed, pool);
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.6g", last.min_pair_distance);
        csv << m << ',' << last.pairs_tested << ',' << last.collisions << ',' << buf << '\n';
        run.note("M=" + std::to_string(m) + " collisions " + std::to_string(last.collisions) +
                 " of " + std::to_string(last.pairs_tested) + " pairs, min distance " +
                 fmt(last.min_pair_distance));
    }
    return 0;
}

int cmd_maxlimit(Run& run) {
    std::vector<double> values;
    for (int i = 1; i <= 10; ++i) values.push_back(i);
    std::vector<double> schedule = parse_list(get_or(run.cfg, "maxlimit_p", "2,10,50,256"),
                                              "maxlimit_p");
    auto perrs = maxlimit_convergence_check(values, schedule, MaxApproxMode::power);
    auto lerrs = maxlimit_convergence_check(values, schedule, MaxApproxMode::log_sum_exp);
    std::ofstream csv(run.out("maxlimit.csv"));
    csv << "p,power_error,lse_error\n";
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%g,%.9g,%.9g", schedule[i], perrs[i], lerrs[i]);
        csv << buf << '\n';
        run.note("p=" + std::to_string(static_cast<long>(schedule[i])) + " max error power " +
                 fmt(perrs[i]) + " lse " + fmt(lerrs[i]));
    }
    return 0;
}

int cmd_profile(Run& run) {
    std::vector<double> set = parse_list(get_or(run.cfg, "profile_set", "-1,1"), "profile_set");
    double h = parse_double(get_or(run.cfg, "grid_step", "0.25"), "grid_step");
    if (!(h > 0.0)) throw config_exit("config key 'grid_step' must be positive");
    double radius = 1.0;
    for (double s : set) radius = std::max(radius, std::abs(s));
    std::vector<double> grid;
    for (double b = -(radius + 1.0); b <= radius + 1.0 + h / 2; b += h) grid.push_back(b);

    ProfileReport report = relu_profile(set, 1.0, grid);
    write_profile_csv(report, run.out("profile.csv"));
    auto recovered = recover_1d_set(report, h);
    std::sort(recovered.begin(), recovered.end());
    std::string line = "recovered " + std::to_string(recovered.size()) + " elements:";
    for (double r : recovered) line += " " + fmt(r);
    run.note(line);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: sanctl <train|eval|gradcheck|injectivity|maxlimit|profile> "
                     "<config> [key=value ...]\n";
        return kExitConfig;
    }
    std::string sub = argv[1];
    std::vector<std::string> overrides(argv + 3, argv + argc);
    try {
        Run run(load_config(argv[2], overrides));
        if (sub == "train") return cmd_train(run, false);
        if (sub == "eval") return cmd_train(run, true);
        if (sub == "gradcheck") return cmd_gradcheck(run);
        if (sub == "injectivity") return cmd_injectivity(run);
        if (sub == "maxlimit") return cmd_maxlimit(run);
        if (sub == "profile") return cmd_profile(run);
        std::cerr << "unknown subcommand '" << sub << "'\n";
        return kExitConfig;
    } catch (const config_exit& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const format_error& e) {
        std::cerr << "dataset error: " << e.what() << '\n';
        return kExitDataset;
    } catch (const io_error& e) {
        std::cerr << "dataset error: " << e.what() << '\n';
        return kExitDataset;
    } catch (const training_error& e) {
        std::cerr << "training error: " << e.what() << '\n';
        return kExitTraining;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
