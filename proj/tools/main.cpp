#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pcc/cloud_io.h"
#include "pcc/codec.h"
#include "pcc/metrics.h"
#include "pcc/training.h"

namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw pcc::ParseError("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw pcc::ParseError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw pcc::ParseError("write failed: " + path);
}

// A directory input expands to its .xyz/.ply entries in name order.
std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const std::string ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".xyz" || ext == ".ply"))
          found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw pcc::ParseError("no input clouds");
  return files;
}

pcc::PointCloud reconstruct_now(const pcc::PreparedCloud& prep, const pcc::CodecModel& model) {
  pcc::nn::Tensor latents(prep.m, model.dims().d);
  {
    const pcc::nn::Tensor enc = model.eval_encode(prep.patch_tensor, prep.m);
    for (int64_t i = 0; i < enc.size(); ++i)
      latents.val[i] = pcc::dequantize_code(pcc::quantize_code(enc.val[i], model.dims().L));
  }
  const pcc::nn::Tensor rel = model.eval_decode(latents, prep.m);
  std::vector<pcc::Vec3> pts = pcc::tensor_to_points(rel);
  if (!prep.patches.patch_scales.empty()) {
    for (int64_t i = 0; i < prep.m; ++i)
      for (int j = 0; j < model.dims().k; ++j)
        pts[static_cast<size_t>(i * model.dims().k + j)] =
            pts[static_cast<size_t>(i * model.dims().k + j)] *
            prep.patches.patch_scales[static_cast<size_t>(i)];
  } else {
    for (auto& p : pts) p = p * (1.0 / prep.density);
  }
  return pcc::reassemble_cloud(prep.centroids, pts, model.dims().k, prep.transform);
}

struct TrainArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string init_weights;
  std::string critic_out;
  std::string log_path;
  std::string snapshot_dir;
  int snapshot_every = 0;
  int checkpoint_every = 0;
  std::string mode = "plain";
  pcc::TrainConfig config;
};

int run_train(const TrainArgs& args) {
  pcc::TrainConfig config = args.config;
  config.mode = args.mode == "gan" ? pcc::TrainMode::kAdversarial : pcc::TrainMode::kPlain;

  pcc::CodecModel model(pcc::ModelDims::standard(config.k()), config.seed);
  if (!args.init_weights.empty()) model.load(args.init_weights);

  const auto files = expand_inputs(args.inputs);
  std::vector<pcc::PreparedCloud> prepared;
  prepared.reserve(files.size());
  for (const auto& f : files) prepared.push_back(pcc::prepare_cloud(pcc::parse_cloud(f), config));

  std::ofstream log;
  if (!args.log_path.empty()) {
    log.open(args.log_path);
    if (!log) throw pcc::ParseError("cannot open log file " + args.log_path);
  }
  auto emit = [&](const std::string& line) {
    std::cout << line << "\n";
    if (log) log << line << "\n";
  };

  char buf[256];
  int64_t step = 0;
  if (config.mode == pcc::TrainMode::kPlain) {
    auto opt = pcc::make_codec_optimizer(model, config);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      for (size_t c = 0; c < prepared.size(); ++c) {
        const auto s = pcc::train_step(prepared[c], model, opt, config);
        ++step;
        std::snprintf(buf, sizeof buf, "%lld %.10g %.10g %.10g", static_cast<long long>(step),
                      s.dcd, s.rate_bpp, s.loss);
        emit(buf);
        if (args.snapshot_every > 0 && step % args.snapshot_every == 0) {
          const auto snap = reconstruct_now(prepared[c], model);
          pcc::write_cloud(args.snapshot_dir + "/step_" + std::to_string(step) + ".xyz", snap);
        }
      }
      if (args.checkpoint_every > 0 && (epoch + 1) % args.checkpoint_every == 0)
        model.save(args.out + ".e" + std::to_string(epoch + 1));
    }
  } else {
    pcc::nn::Network critic = pcc::make_critic(model.dims(), config.seed + 0x9e3779b9);
    auto gen_opt = pcc::make_codec_optimizer(model, config);
    pcc::nn::OptimizerOptions copts;
    copts.learning_rate = config.learning_rate;
    pcc::nn::Optimizer critic_opt(pcc::nn::OptimizerKind::kRmsprop, critic.params(), copts);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      for (size_t c = 0; c < prepared.size(); ++c) {
        const auto s =
            pcc::train_gan_round(prepared[c], model, critic, gen_opt, critic_opt, config);
        ++step;
        std::snprintf(buf, sizeof buf, "%lld %.10g %.10g %.10g %.10g %.10g",
                      static_cast<long long>(step), s.dcd, s.rate_bpp,
                      s.dcd + config.lambda * s.rate_bpp, s.loss_d, s.loss_g);
        emit(buf);
      }
    }
    if (!args.critic_out.empty()) pcc::nn::save_weights(args.critic_out, critic.params());
  }
  model.save(args.out);
  return 0;
}

struct CodecArgs {
  std::string input, output, weights;
  pcc::CodecParams params;
};

int run_compress(const CodecArgs& args) {
  const pcc::PointCloud cloud = pcc::parse_cloud(args.input);
  pcc::CodecModel model(pcc::ModelDims::standard(args.params.K / args.params.alpha), 1);
  model.load(args.weights);
  pcc::CompressInfo info;
  const auto bytes = pcc::compress_cloud(cloud, model, args.params, &info);
  write_file(args.output, bytes);
  std::printf("n=%zu m=%zu m_decoded=%zu depth=%d bytes=%zu bpp=%.6f est_rate_bpp=%.6f\n",
              cloud.points.size(), info.m, info.m_decoded, info.depth, info.total_bytes, info.bpp,
              info.est_rate_bpp);
  return 0;
}

int run_decompress(const std::string& input, const std::string& weights,
                   const std::string& output) {
  const auto bytes = read_file(input);
  const pcc::CompressedCloud header = pcc::unpack(bytes);
  if (header.d != 16 || header.L != 7)
    throw pcc::FormatError("decompress: container needs an unsupported model geometry");
  pcc::CodecModel model(pcc::ModelDims::standard(header.k), 1);
  model.load(weights);
  pcc::DecompressInfo info;
  const pcc::PointCloud out = pcc::decompress_cloud(bytes, model, &info);
  pcc::write_cloud(output, out);
  std::printf("points=%zu m_decoded=%zu depth=%d\n", out.points.size(), info.m_decoded,
              info.depth);
  return 0;
}

int run_eval(const std::string& ref_path, const std::string& test_path, double peak,
             const std::string& container) {
  const pcc::PointCloud ref = pcc::parse_cloud(ref_path);
  const pcc::PointCloud test = pcc::parse_cloud(test_path);
  pcc::MetricsReport r = pcc::evaluate(ref.points, test.points, peak);
  if (!container.empty()) {
    const auto bytes = read_file(container);
    const pcc::CompressedCloud c = pcc::unpack(bytes);
    r.bpp = 8.0 * static_cast<double>(bytes.size()) / static_cast<double>(c.n);
  }
  std::cout << r.to_line() << "\n";
  return 0;
}

int run_inspect(const std::string& input, const std::string& weights, bool dump_codes) {
  const auto bytes = read_file(input);
  const pcc::CompressedCloud c = pcc::unpack(bytes);
  const size_t leaves = c.octree.leaf_count();
  std::printf("version=%d flags=%u n=%u K=%u k=%u d=%u L=%u\n", pcc::kContainerVersion, c.flags,
              c.n, c.K, c.k, c.d, c.L);
  std::printf("scale=%.17g offset=%.17g %.17g %.17g\n", c.transform.scale, c.transform.center.x,
              c.transform.center.y, c.transform.center.z);
  std::printf("octree_depth=%d octree_bytes=%zu m_decoded=%zu latent_bytes=%zu total_bytes=%zu\n",
              c.octree.depth, c.octree.bytes.size(), leaves, c.latent.size(), bytes.size());
  std::printf("bpp=%.6f\n", 8.0 * static_cast<double>(bytes.size()) / static_cast<double>(c.n));
  if (dump_codes) {
    if (weights.empty()) throw pcc::FormatError("inspect: --codes needs --weights");
    if (c.d != 16 || c.L != 7)
      throw pcc::FormatError("inspect: container needs an unsupported model geometry");
    pcc::CodecModel model(pcc::ModelDims::standard(c.k), 1);
    model.load(weights);
    pcc::DecompressInfo info;
    pcc::decompress_cloud(bytes, model, &info);
    std::printf("codes=");
    for (size_t i = 0; i < info.codes.size(); ++i)
      std::printf("%s%d", i ? "," : "", static_cast<int>(info.codes[i]));
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-based learned point cloud geometry codec"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train codec weights on one or more clouds");
  t->add_option("-i,--input", train.inputs, "input cloud files or directories")->required();
  t->add_option("-o,--output", train.out, "output weight file")->required();
  t->add_option("--k", train.config.K, "patch size K");
  t->add_option("--alpha", train.config.alpha, "coverage factor");
  t->add_option("--roc", train.config.roc, "octree budget in bits per point");
  t->add_option("--epochs", train.config.epochs, "passes over the input set");
  t->add_option("--lr", train.config.learning_rate, "learning rate");
  t->add_option("--lambda", train.config.lambda, "rate weight");
  t->add_option("--lambda2", train.config.lambda2, "adversarial weight");
  t->add_option("--mode", train.mode, "plain|gan")
      ->check(CLI::IsMember({"plain", "gan"}));
  t->add_option("--seed", train.config.seed, "rng seed");
  t->add_flag("--extended", train.config.extended, "random sampling + per-patch scaling");
  t->add_flag("--ablate-context", train.config.ablate_context, "uniform pmfs");
  t->add_flag("--ablate-octree", train.config.ablate_octree, "raw centroid accounting");
  t->add_flag("--ablate-global", train.config.ablate_global, "per-patch criterion");
  t->add_option("--clip", train.config.clip_bound, "critic weight clip bound");
  t->add_option("--critic-steps", train.config.critic_steps, "critic updates per round");
  t->add_option("--init-weights", train.init_weights, "starting generator weights");
  t->add_option("--critic-out", train.critic_out, "save critic weights here");
  t->add_option("--log", train.log_path, "write the step log to this file");
  t->add_option("--snapshot-every", train.snapshot_every, "dump reconstruction every N steps");
  t->add_option("--snapshot-dir", train.snapshot_dir, "snapshot directory");
  t->add_option("--checkpoint-every", train.checkpoint_every, "save weights every N epochs");

  CodecArgs comp;
  auto* c = app.add_subcommand("compress", "compress one cloud");
  c->add_option("-i,--input", comp.input, "input cloud")->required();
  c->add_option("-o,--output", comp.output, "output container")->required();
  c->add_option("-w,--weights", comp.weights, "weight file")->required();
  c->add_option("--k", comp.params.K, "patch size K")->required();
  c->add_option("--alpha", comp.params.alpha, "coverage factor");
  c->add_option("--roc", comp.params.roc, "octree budget in bits per point");
  c->add_flag("--extended", comp.params.extended, "random sampling + per-patch scaling");
  c->add_option("--seed", comp.params.seed, "sampling seed (extended mode)");

  std::string d_in, d_w, d_out;
  auto* d = app.add_subcommand("decompress", "decompress a container");
  d->add_option("-i,--input", d_in, "input container")->required();
  d->add_option("-w,--weights", d_w, "weight file")->required();
  d->add_option("-o,--output", d_out, "output cloud")->required();

  std::string e_ref, e_test, e_container;
  double e_peak = 1.0;
  auto* e = app.add_subcommand("eval", "distortion and uniformity report");
  e->add_option("--ref", e_ref, "reference cloud")->required();
  e->add_option("--test", e_test, "cloud under test")->required();
  e->add_option("--peak", e_peak, "PSNR peak (normalized-domain default 1.0)");
  e->add_option("--container", e_container, "container for bpp accounting");

  std::string i_in, i_w;
  bool i_codes = false;
  auto* i = app.add_subcommand("inspect", "dump container structure");
  i->add_option("-i,--input", i_in, "input container")->required();
  i->add_option("-w,--weights", i_w, "weight file (for --codes)");
  i->add_flag("--codes", i_codes, "decode and print the latent codes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) return run_train(train);
    if (c->parsed()) return run_compress(comp);
    if (d->parsed()) return run_decompress(d_in, d_w, d_out);
    if (e->parsed()) return run_eval(e_ref, e_test, e_peak, e_container);
    if (i->parsed()) return run_inspect(i_in, i_w, i_codes);
  } catch (const pcc::ParseError& err) {
    std::cerr << "parse error: " << err.what() << "\n";
    return 2;
  } catch (const pcc::FormatError& err) {
    std::cerr << "format error: " << err.what() << "\n";
    return 3;
  } catch (const pcc::StreamError& err) {
    std::cerr << "stream error: " << err.what() << "\n";
    return 4;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
