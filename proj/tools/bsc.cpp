// bsc: built-structure counting in overhead RGB imagery.
//
// Subcommands: synth, validate-manifest, train-ssnet, train-counter, eval,
// segment, count-tile, render. Every run writes a config snapshot next to
// its primary output so results can be reproduced from the file alone.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bsc/bsc.hpp"

namespace fs = std::filesystem;

namespace {

void write_snapshot(const std::string& out_path, const std::vector<std::string>& argv_copy,
                    const nlohmann::json& config) {
  std::ofstream f(out_path);
  if (!f.good()) throw bsc::IoError("cannot write config snapshot: " + out_path);
  f << "bsc " << bsc::kVersion << "\n";
  f << "command:";
  for (const auto& a : argv_copy) f << " " << a;
  f << "\n";
  f << "config: " << config.dump(2) << "\n";
}

bsc::Manifest manifest_subset(const bsc::Manifest& m, const std::string& split) {
  if (split == "all") return m;
  const auto s = bsc::parse_split(split);
  if (!s) throw bsc::ConfigError("unknown split selector: " + split);
  bsc::Manifest out;
  out.base_dir = m.base_dir;
  out.entries = m.split_entries(*s);
  return out;
}

std::shared_ptr<const bsc::Backbone> load_backbone(const std::string& descriptor) {
  return bsc::make_backbone(descriptor);
}

std::vector<long> read_truth_list(const std::string& path) {
  std::ifstream f(path);
  if (!f.good()) throw bsc::IoError("cannot open truth list: " + path);
  std::vector<long> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(std::stol(line));
  }
  return out;
}

std::vector<long> parse_edges(const std::string& csv) {
  std::vector<long> edges;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) edges.push_back(std::stol(tok));
  return edges;
}

// ---- subcommand bodies ----

struct SynthArgs {
  std::string out, split, prefix = "scene";
  int n = 100, count_min = 0, count_max = 80, size = 336;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a, const std::vector<std::string>& argv_copy) {
  bsc::CorpusSpec spec;
  spec.n = a.n;
  spec.count_lo = a.count_min;
  spec.count_hi = a.count_max;
  spec.seed = a.seed;
  spec.size_px = a.size;
  spec.id_prefix = a.prefix;
  if (!a.split.empty()) {
    const auto s = bsc::parse_split(a.split);
    if (!s) throw bsc::ConfigError("unknown split: " + a.split);
    spec.force_split = *s;
  }
  const auto m = bsc::generate_corpus(spec, a.out);
  write_snapshot((fs::path(a.out) / "synth.config.txt").string(), argv_copy,
                 {{"n", a.n}, {"count_min", a.count_min}, {"count_max", a.count_max},
                  {"seed", a.seed}, {"size", a.size}, {"split", a.split.empty() ? "hash-80/10/10" : a.split}});
  std::cout << "wrote " << m.entries.size() << " scenes under " << a.out << "\n";
  return 0;
}

int run_validate(const std::string& manifest_path) {
  const auto m = bsc::load_manifest(manifest_path);
  std::size_t train = 0, val = 0, test = 0, masks = 0;
  for (const auto& e : m.entries) {
    if (e.split == bsc::Split::Train) ++train;
    if (e.split == bsc::Split::Val) ++val;
    if (e.split == bsc::Split::Test) ++test;
    if (e.mask_path) ++masks;
  }
  std::cout << "ok: " << m.entries.size() << " entries (" << train << " train / " << val << " val / "
            << test << " test), " << masks << " with masks\n";
  return 0;
}

struct TrainSsnetArgs {
  std::string manifest, out, split = "train", padding = "same", init_trunk;
  int epochs = 30, batch = 16, mining_interval = 15;
  int pos_per_tile = 2, neg_per_tile = 2, candidates_per_tile = 1, context_per_tile = 1;
  double lr = 1e-5, width_mult = 1.0;
  std::uint64_t seed = 0;
};

int run_train_ssnet(const TrainSsnetArgs& a, const std::vector<std::string>& argv_copy) {
  const auto manifest = bsc::load_manifest(a.manifest);
  const auto m = manifest_subset(manifest, a.split);
  if (m.entries.empty()) throw bsc::ConfigError("no '" + a.split + "' entries in " + a.manifest);

  bsc::SsNetConfig arch;
  arch.width_mult = a.width_mult;
  arch.padding = a.padding == "valid" ? bsc::SsNetConfig::Padding::Valid : bsc::SsNetConfig::Padding::Same;

  bsc::SsNetTrainConfig cfg;
  cfg.arch = arch;
  cfg.epochs = a.epochs;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.seed = a.seed;
  cfg.mining_interval = a.mining_interval;
  if (!a.init_trunk.empty()) cfg.init_from = a.init_trunk;

  const auto patches = bsc::build_patch_set(m, a.pos_per_tile, a.neg_per_tile, arch.patch,
                                            bsc::derive_seed(a.seed, 0xf00d));
  if (patches.empty()) throw bsc::ConfigError("no patches sampled; do the tiles carry masks?");

  std::vector<bsc::Image8> candidates;
  if (a.candidates_per_tile > 0) {
    std::uint64_t idx = 0;
    for (const auto& e : m.entries) {
      if (!e.mask_path) continue;
      const auto tile = bsc::load_tile(m, e);
      bsc::Rng rng(bsc::derive_seed(a.seed, 0xca0 + idx++));
      if (tile.pixels.h >= 128 && tile.pixels.w >= 128) {
        auto negs = bsc::sample_negative_crops(tile, a.candidates_per_tile, 128, rng);
        candidates.insert(candidates.end(), std::make_move_iterator(negs.begin()),
                          std::make_move_iterator(negs.end()));
      }
    }
  }

  std::vector<bsc::ContextSample> contexts;
  if (a.context_per_tile > 0)
    contexts = bsc::build_context_set(m, a.context_per_tile, 128, bsc::derive_seed(a.seed, 0xcc));

  auto net = bsc::SsNet<float>::random_init(arch, bsc::derive_seed(a.seed, 0x11));
  bsc::SsNetTrainHooks<float> hooks;
  hooks.on_epoch = [&](int epoch, double loss) {
    std::cout << "epoch " << epoch << "  loss " << loss << "\n";
  };
  hooks.on_mining = [&](const bsc::SsNet<float>&, const bsc::MiningState& st, int epoch, bool before) {
    if (!before)
      std::cout << "mining round at epoch " << epoch << ": pool size " << st.negative_pool.size() << "\n";
  };
  const auto res = bsc::train_ssnet(net, patches, cfg, candidates, hooks, contexts);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";

  auto ck = net.to_checkpoint();
  ck.meta["train"] = {{"epochs", a.epochs}, {"batch", a.batch}, {"lr", a.lr},
                      {"seed", a.seed}, {"patches", patches.size()},
                      {"mining_rounds", res.mining.round_epochs},
                      {"negative_pool", res.mining.negative_pool.size()},
                      {"epoch_loss", res.epoch_loss}};
  ck.save(a.out);
  write_snapshot(a.out + ".config.txt", argv_copy, ck.meta["train"]);
  std::cout << "saved " << a.out << "\n";
  return 0;
}

struct TrainCounterArgs {
  std::string kind, train, val, out, backbone = "tiny64:seed=17", ssnet;
  std::string train_split = "train", val_split = "val";
  std::string warm_drc, warm_gwap, warm_ccpp;
  int epochs = 60, batch = 16, patience = 10, image_size = 336, workers = 2;
  double lr = 1e-4, dropout = 0.6;
  std::uint64_t seed = 0;
  bool no_augment = false;
};

void warm_start_from_paths(bsc::CountModel<float>& model, const std::string& drc, const std::string& gwap,
                           const std::string& ccpp) {
  auto load = [&](const std::string& path) {
    return bsc::CountModel<float>::from_checkpoint(bsc::Checkpoint::load(path), model.backbone);
  };
  std::optional<bsc::CountModel<float>> d, g, c;
  if (!drc.empty()) d = load(drc);
  if (!gwap.empty()) g = load(gwap);
  if (!ccpp.empty()) c = load(ccpp);
  bsc::warm_start_fusion(model, d ? &*d : nullptr, g ? &*g : nullptr, c ? &*c : nullptr);
}

int run_train_counter(const TrainCounterArgs& a, const std::vector<std::string>& argv_copy) {
  const auto kind = bsc::parse_kind(a.kind);
  if (kind != bsc::CountKind::Drc && a.ssnet.empty())
    throw bsc::ConfigError(a.kind + " requires --ssnet (the attention map source)");
  if (kind == bsc::CountKind::Drc && !a.ssnet.empty())
    throw bsc::ConfigError("drc takes no --ssnet");

  auto backbone = load_backbone(a.backbone);
  std::optional<bsc::SsNet<float>> ssnet;
  if (!a.ssnet.empty()) ssnet = bsc::SsNet<float>::from_checkpoint(bsc::Checkpoint::load(a.ssnet));

  auto model = bsc::CountModel<float>::create(kind, backbone, std::move(ssnet), a.seed, a.image_size,
                                              a.dropout);
  model.ssnet_source = a.ssnet;
  if (kind == bsc::CountKind::Fusion && !(a.warm_drc.empty() && a.warm_gwap.empty() && a.warm_ccpp.empty()))
    warm_start_from_paths(model, a.warm_drc, a.warm_gwap, a.warm_ccpp);

  const auto train_m = manifest_subset(bsc::load_manifest(a.train), a.train_split);
  const auto val_m = a.val.empty() ? bsc::Manifest{} : manifest_subset(bsc::load_manifest(a.val), a.val_split);

  bsc::CounterTrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.patience = a.patience;
  cfg.seed = a.seed;
  cfg.workers = a.workers;
  cfg.augment = !a.no_augment;

  const auto res = bsc::train_counter(model, train_m, val_m, cfg);
  for (std::size_t e = 0; e < res.train_loss.size(); ++e) {
    std::cout << "epoch " << (e + 1) << "  train " << res.train_loss[e];
    if (e < res.val_mae.size()) std::cout << "  val_mae " << res.val_mae[e];
    std::cout << "\n";
  }
  if (res.best_epoch > 0) std::cout << "best epoch " << res.best_epoch << " restored\n";

  auto ck = model.to_checkpoint();
  bsc::append_optimizer_state(ck, res.optimizer);
  ck.save(a.out);
  write_snapshot(a.out + ".config.txt", argv_copy, model.train_log);
  std::cout << "saved " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string model, manifest, split = "test", out_dir = ".";
  int workers = 2;
};

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv_copy) {
  const auto model = bsc::CountModel<float>::from_checkpoint(bsc::Checkpoint::load(a.model));
  const auto m = manifest_subset(bsc::load_manifest(a.manifest), a.split);
  if (m.entries.empty()) throw bsc::ConfigError("no '" + a.split + "' entries in " + a.manifest);
  fs::create_directories(a.out_dir);

  std::vector<bsc::LabeledPrediction> raw(m.entries.size()), rounded(m.entries.size());
  std::atomic<std::size_t> cursor{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= m.entries.size()) return;
      const auto tile = bsc::load_tile(m, m.entries[i]);
      const auto p = model.predict(tile);
      raw[i] = {tile.id, tile.count, p.raw};
      rounded[i] = {tile.id, tile.count, static_cast<double>(p.rounded)};
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < a.workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();

  const auto report_raw = bsc::evaluate(raw);
  const auto report_rounded = bsc::evaluate(rounded);
  bsc::write_residuals_tsv(report_raw, (fs::path(a.out_dir) / "residuals_raw.tsv").string());
  bsc::write_band_summary_tsv(report_raw, (fs::path(a.out_dir) / "bands_raw.tsv").string());
  bsc::write_residuals_tsv(report_rounded, (fs::path(a.out_dir) / "residuals_rounded.tsv").string());
  bsc::write_band_summary_tsv(report_rounded, (fs::path(a.out_dir) / "bands_rounded.tsv").string());
  std::ofstream summary(fs::path(a.out_dir) / "summary.txt");
  summary << "model: " << a.model << "\nimages: " << report_raw.n_images << "\n\n";
  summary << "== raw predictions ==\n" << bsc::band_report(report_raw) << "\n";
  summary << "== rounded predictions ==\n" << bsc::band_report(report_rounded);
  write_snapshot((fs::path(a.out_dir) / "eval.config.txt").string(), argv_copy,
                 {{"model", a.model}, {"manifest", a.manifest}, {"split", a.split}});
  std::cout << bsc::band_report(report_raw);
  std::cout << "reports written to " << a.out_dir << "\n";
  return 0;
}

struct SegmentArgs {
  std::string ssnet, image, out_prob, out_float, out_native;
};

int run_segment(const SegmentArgs& a, const std::vector<std::string>& argv_copy) {
  const auto net = bsc::SsNet<float>::from_checkpoint(bsc::Checkpoint::load(a.ssnet));
  const auto img = bsc::read_image(a.image);
  const auto pm = net.segment(img);
  // 8-bit export: value = round(255 * p)
  bsc::Image8 gray(pm.values.h, pm.values.w, 1);
  for (int y = 0; y < gray.h; ++y)
    for (int x = 0; x < gray.w; ++x)
      gray.at(y, x) = static_cast<std::uint8_t>(std::lround(255.0 * pm.values.at(y, x)));
  bsc::write_image(gray, a.out_prob);
  if (!a.out_float.empty()) bsc::write_float_map(pm.values, a.out_float);
  if (!a.out_native.empty()) {
    bsc::Mat<float> native(pm.native.h, pm.native.w);
    for (int y = 0; y < native.h; ++y)
      for (int x = 0; x < native.w; ++x) native.at(y, x) = pm.native.at(1, y, x);
    bsc::write_float_map(native, a.out_native);
  }
  write_snapshot(a.out_prob + ".config.txt", argv_copy,
                 {{"ssnet", a.ssnet}, {"image", a.image}, {"built_up_ratio", bsc::built_up_ratio(pm)}});
  std::cout << "built-up ratio at 0.5: " << bsc::built_up_ratio(pm) << "\n";
  return 0;
}

struct CountTileArgs {
  std::string model, image, out_table, truths;
  int cell = 336, workers = 2;
  double mpp = bsc::kDefaultMetersPerPixel;
};

int run_count_tile(const CountTileArgs& a, const std::vector<std::string>& argv_copy) {
  const auto model = bsc::CountModel<float>::from_checkpoint(bsc::Checkpoint::load(a.model));
  bsc::ImageTile tile;
  tile.id = fs::path(a.image).stem().string();
  tile.pixels = bsc::read_image(a.image);
  tile.meters_per_pixel = a.mpp;

  std::optional<std::vector<long>> truths;
  if (!a.truths.empty()) truths = read_truth_list(a.truths);
  const auto grid = bsc::count_tile(model, tile, a.cell, a.workers, truths ? &*truths : nullptr);
  bsc::write_cell_table(grid, a.out_table);

  const double sec_per_image = grid.seconds / static_cast<double>(grid.cells.size());
  const double km2 = static_cast<double>(grid.cells.size()) *
                     std::pow(bsc::tile_extent_meters(a.cell, a.mpp) / 1000.0, 2);
  std::cout << "cells: " << grid.cells.size() << " (" << grid.rows << " x " << grid.cols << ")\n";
  std::cout << "total predicted: " << grid.total_pred();
  if (const auto t = grid.total_truth()) std::cout << "  truth: " << *t;
  std::cout << "\n";
  std::cout << "throughput: " << sec_per_image << " sec/image, " << grid.seconds / km2 << " sec/km2\n";
  write_snapshot(a.out_table + ".config.txt", argv_copy,
                 {{"model", a.model}, {"image", a.image}, {"cell", a.cell},
                  {"workers", a.workers}, {"sec_per_image", sec_per_image}});
  return 0;
}

struct RenderArgs {
  std::string table, image, out, bins = "0,10,20,30,40", series;
  double opacity = 0.45;
};

int run_render(const RenderArgs& a, const std::vector<std::string>& argv_copy) {
  const auto grid = bsc::parse_cell_table(a.table);
  const auto base = bsc::read_image(a.image);
  const auto bins = bsc::bins_from_edges(parse_edges(a.bins));
  const auto img = bsc::render_heatmap(grid, base, bins, a.opacity);
  bsc::write_image(img, a.out);
  if (!a.series.empty()) bsc::write_truth_series(grid, a.series);
  write_snapshot(a.out + ".config.txt", argv_copy,
                 {{"table", a.table}, {"bins", a.bins}, {"opacity", a.opacity}});
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> argv_copy(argv, argv + argc);
  CLI::App app{"built-structure counting in overhead RGB imagery"};
  app.require_subcommand(1);

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  synth->add_option("--out", sy.out, "output directory")->required();
  synth->add_option("--n", sy.n, "number of scenes");
  synth->add_option("--count-min", sy.count_min, "minimum building count");
  synth->add_option("--count-max", sy.count_max, "maximum building count");
  synth->add_option("--seed", sy.seed, "corpus seed");
  synth->add_option("--size", sy.size, "scene edge in pixels");
  synth->add_option("--split", sy.split, "force one split instead of the 80/10/10 hash");
  synth->add_option("--prefix", sy.prefix, "scene id prefix");

  std::string vm_manifest;
  auto* validate = app.add_subcommand("validate-manifest", "parse and validate a manifest");
  validate->add_option("--manifest", vm_manifest, "manifest path")->required();

  TrainSsnetArgs ts;
  auto* tss = app.add_subcommand("train-ssnet", "train the built-up segmenter on mask patches");
  tss->add_option("--manifest", ts.manifest, "manifest with masked tiles")->required();
  tss->add_option("--out", ts.out, "output checkpoint")->required();
  tss->add_option("--split", ts.split, "split to draw patches from");
  tss->add_option("--epochs", ts.epochs, "training epochs");
  tss->add_option("--batch", ts.batch, "batch size");
  tss->add_option("--lr", ts.lr, "SGD learning rate");
  tss->add_option("--seed", ts.seed, "seed");
  tss->add_option("--width-mult", ts.width_mult, "channel width multiplier");
  tss->add_option("--padding", ts.padding, "trunk padding: same|valid");
  tss->add_option("--mining-interval", ts.mining_interval, "epochs between mining rounds");
  tss->add_option("--pos-per-tile", ts.pos_per_tile, "built patches per tile");
  tss->add_option("--neg-per-tile", ts.neg_per_tile, "non-built patches per tile");
  tss->add_option("--candidates-per-tile", ts.candidates_per_tile, "128px mining candidates per tile");
  tss->add_option("--context-per-tile", ts.context_per_tile, "128px context crops per tile");
  tss->add_option("--init-trunk", ts.init_trunk, "checkpoint with pretrained trunk weights");

  TrainCounterArgs tc;
  auto* tcc = app.add_subcommand("train-counter", "train one of the counting models");
  tcc->add_option("--kind", tc.kind, "drc|gwap|ccpp|fusion")->required();
  tcc->add_option("--train", tc.train, "training manifest")->required();
  tcc->add_option("--val", tc.val, "validation manifest");
  tcc->add_option("--out", tc.out, "output checkpoint")->required();
  tcc->add_option("--backbone", tc.backbone, "backbone descriptor");
  tcc->add_option("--ssnet", tc.ssnet, "segmenter checkpoint (attention kinds)");
  tcc->add_option("--train-split", tc.train_split, "split selector for --train (or 'all')");
  tcc->add_option("--val-split", tc.val_split, "split selector for --val (or 'all')");
  tcc->add_option("--epochs", tc.epochs, "training epochs");
  tcc->add_option("--batch", tc.batch, "batch size");
  tcc->add_option("--lr", tc.lr, "learning rate");
  tcc->add_option("--dropout", tc.dropout, "dropout rate between the fc layers");
  tcc->add_option("--patience", tc.patience, "early-stopping patience on val MAE (0 = off)");
  tcc->add_option("--seed", tc.seed, "seed");
  tcc->add_option("--image-size", tc.image_size, "model input size");
  tcc->add_option("--workers", tc.workers, "feature-extraction workers");
  tcc->add_flag("--no-augment", tc.no_augment, "disable the five-fold augmentation");
  tcc->add_option("--warm-start-drc", tc.warm_drc, "fusion: init the drc stream from this checkpoint");
  tcc->add_option("--warm-start-gwap", tc.warm_gwap, "fusion: init the gwap stream from this checkpoint");
  tcc->add_option("--warm-start-ccpp", tc.warm_ccpp, "fusion: init the ccpp stream from this checkpoint");

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "evaluate a counting model on a manifest split");
  evc->add_option("--model", ev.model, "counter checkpoint")->required();
  evc->add_option("--manifest", ev.manifest, "manifest path")->required();
  evc->add_option("--split", ev.split, "split selector (or 'all')");
  evc->add_option("--out-dir", ev.out_dir, "report directory");
  evc->add_option("--workers", ev.workers, "inference workers");

  SegmentArgs sg;
  auto* sgc = app.add_subcommand("segment", "run the segmenter over an image");
  sgc->add_option("--ssnet", sg.ssnet, "segmenter checkpoint")->required();
  sgc->add_option("--image", sg.image, "input image")->required();
  sgc->add_option("--out-prob", sg.out_prob, "8-bit probability map (round(255p))")->required();
  sgc->add_option("--out-float", sg.out_float, "lossless float map");
  sgc->add_option("--out-native", sg.out_native, "native stride-8 built-channel map");

  CountTileArgs ct;
  auto* ctc = app.add_subcommand("count-tile", "grid counting over a large tile");
  ctc->add_option("--model", ct.model, "counter checkpoint")->required();
  ctc->add_option("--image", ct.image, "large input image")->required();
  ctc->add_option("--out-table", ct.out_table, "cell table output")->required();
  ctc->add_option("--cell", ct.cell, "cell edge in pixels");
  ctc->add_option("--workers", ct.workers, "parallel cell workers");
  ctc->add_option("--truths", ct.truths, "per-cell truth counts, one per line, row-major");
  ctc->add_option("--mpp", ct.mpp, "meters per pixel");

  RenderArgs rd;
  auto* rdc = app.add_subcommand("render", "render a heat map from a cell table");
  rdc->add_option("--table", rd.table, "cell table from count-tile")->required();
  rdc->add_option("--image", rd.image, "the tile the table was computed on")->required();
  rdc->add_option("--out", rd.out, "overlay image output")->required();
  rdc->add_option("--bins", rd.bins, "count bin edges, e.g. 0,10,20,30,40");
  rdc->add_option("--opacity", rd.opacity, "overlay opacity in [0,1]");
  rdc->add_option("--series", rd.series, "also write the truth-vs-prediction series");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth) return run_synth(sy, argv_copy);
    if (*validate) return run_validate(vm_manifest);
    if (*tss) return run_train_ssnet(ts, argv_copy);
    if (*tcc) return run_train_counter(tc, argv_copy);
    if (*evc) return run_eval(ev, argv_copy);
    if (*sgc) return run_segment(sg, argv_copy);
    if (*ctc) return run_count_tile(ct, argv_copy);
    if (*rdc) return run_render(rd, argv_copy);
  } catch (const bsc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
