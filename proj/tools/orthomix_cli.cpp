// Command-line front end for the three parties: the trusted third party
// (gen-dataset, train, keygen, transform-model, provision, evaluate), the
// client (encrypt, client) and the provider (serve, infer).

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "orthomix/cipher.hpp"
#include "orthomix/dataset.hpp"
#include "orthomix/engine.hpp"
#include "orthomix/eval.hpp"
#include "orthomix/formats.hpp"
#include "orthomix/model.hpp"
#include "orthomix/net.hpp"

using namespace orthomix;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void print_logits(const std::vector<double>& logits, std::size_t predicted) {
    std::printf("predicted=%zu\nlogits=", predicted);
    for (std::size_t i = 0; i < logits.size(); ++i) std::printf(i ? ",%.17g" : "%.17g", logits[i]);
    std::printf("\n");
}

struct TrainJob {
    TrainConfig config;
    ModelGeometry geometry;
    std::string dataset;
    std::string out;
    std::string log;
};

TrainJob load_train_job(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    const auto j = nlohmann::json::parse(in);
    TrainJob job;
    auto& c = job.config;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    const std::string opt = j.value("optimizer", std::string("adam"));
    if (opt == "adam") {
        c.optimizer = OptimizerKind::adam;
    } else if (opt == "sgd") {
        c.optimizer = OptimizerKind::sgd;
    } else {
        throw Error("config: optimizer must be \"adam\" or \"sgd\"");
    }
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    if (j.contains("geometry")) {
        const auto& g = j["geometry"];
        auto& geo = job.geometry;
        geo.patch = g.value("patch", geo.patch);
        geo.channels = g.value("channels", geo.channels);
        geo.dim = g.value("dim", geo.dim);
        geo.depth = g.value("depth", geo.depth);
        geo.kernel = g.value("kernel", geo.kernel);
        geo.classes = g.value("classes", geo.classes);
    }
    job.dataset = j.value("dataset", std::string());
    job.out = j.value("out", std::string());
    job.log = j.value("log", std::string());
    return job;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Privacy-preserving ConvMixer inference with block-wise random orthogonal encryption"};
    app.require_subcommand(1);

    // keygen
    auto* keygen = app.add_subcommand("keygen", "Write a secret key file");
    SecretKey key_spec;
    std::string key_out;
    keygen->add_option("--seed", key_spec.seed, "Secret seed")->required();
    keygen->add_option("--patch", key_spec.patch, "Block size p")->required()->check(CLI::PositiveNumber);
    keygen->add_option("--channels", key_spec.channels, "Image channels C")->required()->check(CLI::PositiveNumber);
    keygen->add_option("--out", key_out, "Output key file")->required();

    // gen-dataset
    auto* gen = app.add_subcommand("gen-dataset", "Generate the synthetic toy dataset");
    std::uint64_t data_seed = 0;
    std::size_t per_class = 100;
    std::string data_out;
    gen->add_option("--seed", data_seed, "Dataset seed")->required();
    gen->add_option("--per-class", per_class, "Images per class (80/20 train/test)")->required();
    gen->add_option("--out", data_out, "Output dataset file")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a plain ConvMixer model");
    std::string config_path, train_dataset, train_out, train_log;
    train_cmd->add_option("--config", config_path, "JSON training config")->required();
    train_cmd->add_option("--dataset", train_dataset, "Dataset file (overrides config)");
    train_cmd->add_option("--out", train_out, "Output model file (overrides config)");
    train_cmd->add_option("--log", train_log, "Per-epoch TSV log file (default: stdout)");

    // transform-model
    auto* transform = app.add_subcommand("transform-model", "Transform a plain model with a key");
    std::string key_path, in_path, out_path;
    transform->add_option("--key", key_path, "Key file")->required();
    transform->add_option("--in", in_path, "Plain model")->required();
    transform->add_option("--out", out_path, "Encrypted model")->required();

    // provision
    auto* provision = app.add_subcommand("provision", "Write a key and the matching encrypted model");
    std::string model_out;
    provision->add_option("--seed", key_spec.seed, "Secret seed")->required();
    provision->add_option("--model", in_path, "Plain model")->required();
    provision->add_option("--key-out", key_out, "Output key file")->required();
    provision->add_option("--model-out", model_out, "Output encrypted model")->required();

    // encrypt
    auto* encrypt = app.add_subcommand("encrypt", "Encrypt a plain image");
    std::string view_path;
    encrypt->add_option("--key", key_path, "Key file")->required();
    encrypt->add_option("--in", in_path, "Plain image (PPM or CMXE)")->required();
    encrypt->add_option("--out", out_path, "Encrypted CMXE image")->required();
    encrypt->add_option("--view", view_path, "Also write a normalized PPM for viewing");

    // infer
    auto* infer = app.add_subcommand("infer", "Run a model on a CMXE image locally");
    std::string model_path;
    infer->add_option("--model", model_path, "Model file")->required();
    infer->add_option("--in", in_path, "CMXE image")->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Serve encrypted inference");
    std::string bind_addr;
    serve->add_option("--model", model_path, "Encrypted model file")->required();
    serve->add_option("--bind", bind_addr, "ADDR:PORT to listen on")->required();

    // client
    auto* client = app.add_subcommand("client", "Encrypt an image and query a provider");
    std::string server_addr;
    int timeout_ms = 5000;
    client->add_option("--key", key_path, "Key file")->required();
    client->add_option("--server", server_addr, "Provider ADDR:PORT")->required();
    client->add_option("--in", in_path, "Plain image (PPM or CMXE)")->required();
    client->add_option("--timeout-ms", timeout_ms, "Connect/read timeout");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Accuracy matrix and leakage metrics");
    std::string dataset_path, export_dir;
    evaluate->add_option("--model", model_path, "Plain model file")->required();
    evaluate->add_option("--key", key_path, "Key file")->required();
    evaluate->add_option("--dataset", dataset_path, "Dataset file (test split is used)")->required();
    evaluate->add_option("--export-dir", export_dir, "Write plain/encrypted PPMs of the first test image");

    CLI11_PARSE(app, argc, argv);

    try {
        if (keygen->parsed()) {
            save_key(key_out, key_spec);
            std::printf("wrote key seed=%llu patch=%u channels=%u n=%zu to %s\n",
                        static_cast<unsigned long long>(key_spec.seed), key_spec.patch, key_spec.channels,
                        key_spec.dimension(), key_out.c_str());
        } else if (gen->parsed()) {
            const DatasetSplit split = gen_toy_dataset(data_seed, per_class);
            save_dataset(data_out, split);
            std::printf("wrote %zu train / %zu test images to %s\n", split.train.size(), split.test.size(),
                        data_out.c_str());
        } else if (train_cmd->parsed()) {
            TrainJob job = load_train_job(config_path);
            if (!train_dataset.empty()) job.dataset = train_dataset;
            if (!train_out.empty()) job.out = train_out;
            if (!train_log.empty()) job.log = train_log;
            if (job.dataset.empty() || job.out.empty()) throw Error("train: dataset and out paths are required");
            const DatasetSplit split = load_dataset(job.dataset);
            std::ofstream log_file;
            if (!job.log.empty()) {
                log_file.open(job.log);
                if (!log_file) throw IoError("cannot open log " + job.log);
            }
            std::ostream& log = job.log.empty() ? std::cout : log_file;
            const TrainResult r = train(job.config, split.train, job.geometry,
                                        split.test.empty() ? nullptr : &split.test, [&](const EpochStats& s) {
                                            char line[128];
                                            std::snprintf(line, sizeof line, "%zu\t%.6f\t%.2f\t%.2f\n", s.epoch,
                                                          s.loss, s.train_accuracy, s.test_accuracy);
                                            log << line << std::flush;
                                        });
            save_model(job.out, r.model);
        } else if (transform->parsed()) {
            const SecretKey key = load_key(key_path);
            save_model(out_path, transform_model(load_model(in_path), generate_orthogonal(key)));
        } else if (provision->parsed()) {
            const ConvMixerModel plain = load_model(in_path);
            const SecretKey key{key_spec.seed, plain.geometry.patch, plain.geometry.channels};
            thirdparty_provision(key, in_path, key_out, model_out);
        } else if (encrypt->parsed()) {
            const SecretKey key = load_key(key_path);
            const ImageTensor xhat = encrypt_image(load_plain_image(in_path), generate_orthogonal(key));
            save_cmxe(out_path, xhat, key.patch);
            if (!view_path.empty()) export_ppm(normalize_for_view(xhat), view_path);
        } else if (infer->parsed()) {
            const ConvMixerModel model = load_model(model_path);
            const CmxeImage img = load_cmxe(in_path);
            if (img.patch != model.geometry.patch) throw DimensionError("image patch size does not match model");
            const Logits logits = forward(model, img.image);
            print_logits(logits.values, logits.argmax());
        } else if (serve->parsed()) {
            ProviderServer server(load_model(model_path), parse_endpoint(bind_addr));
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.start();
            std::printf("listening on %s:%u\n", parse_endpoint(bind_addr).host.c_str(), server.port());
            std::fflush(stdout);
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
            std::printf("served %zu requests\n", server.requests_served());
        } else if (client->parsed()) {
            const InferResponse r = client_infer(parse_endpoint(server_addr), load_key(key_path),
                                                 load_plain_image(in_path), std::chrono::milliseconds(timeout_ms));
            print_logits(r.logits, r.predicted);
        } else if (evaluate->parsed()) {
            const ConvMixerModel model = load_model(model_path);
            const SecretKey key = load_key(key_path);
            const DatasetSplit split = load_dataset(dataset_path);
            const OrthoMatrix a = generate_orthogonal(key);
            const AccuracyMatrix acc = accuracy_matrix(model, a, split.test);
            const LeakageComparison leak = compare_leakage(split.test, key);
            std::fputs(format_report(acc, &leak).c_str(), stdout);
            if (!export_dir.empty()) {
                const ImageTensor& x = split.test.images.front();
                const std::filesystem::path dir(export_dir);
                std::filesystem::create_directories(dir);
                if (x.channels() == 3) {
                    export_ppm(x, dir / "plain.ppm");
                    export_ppm(normalize_for_view(encrypt_image(x, a)), dir / "orthogonal.ppm");
                    export_ppm(normalize_for_view(conventional_encrypt(x, key)), dir / "conventional.ppm");
                }
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
