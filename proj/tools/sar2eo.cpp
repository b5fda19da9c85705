#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "s2e/chip_io.hpp"
#include "s2e/config.hpp"
#include "s2e/error.hpp"
#include "s2e/eval.hpp"
#include "s2e/ingest.hpp"
#include "s2e/osm.hpp"
#include "s2e/synthgen.hpp"
#include "s2e/train.hpp"

namespace fs = std::filesystem;
using namespace s2e;

namespace {

// Flags that map onto RunConfig keys. Only flags given on the command line
// are applied, after the config file, so flag > file > default.
class Bindings {
 public:
  void option(CLI::App* app, const std::string& flag, const std::string& key,
              const std::string& help) {
    auto& slot = values_[key];
    bound_.emplace_back(app->add_option(flag, slot, help), key, std::string{});
  }
  void flag(CLI::App* app, const std::string& flag, const std::string& key,
            const std::string& value, const std::string& help) {
    bound_.emplace_back(app->add_flag(flag, help), key, value);
  }
  void apply(RunConfig& cfg) const {
    for (const auto& [opt, key, fixed] : bound_) {
      if (opt->count() == 0) continue;
      cfg.set(key, fixed.empty() ? values_.at(key) : fixed);
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::tuple<CLI::Option*, std::string, std::string>> bound_;
};

struct Common {
  std::string config_file;
  bool force = false;
};

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_file,
                  "Flat 'section.key = value' config file; flags override it");
  app->add_flag("--force", common.force, "Write into an existing output location");
}

RunConfig resolve(const Common& common, const Bindings& bindings, RunConfig base = {}) {
  if (!common.config_file.empty()) base.merge_file(common.config_file);
  bindings.apply(base);
  return base;
}

void claim_output(const fs::path& out, bool force) {
  if (fs::exists(out) && !force) {
    fail(ErrorKind::config, "output " + out.string() + " already exists; pass --force to overwrite");
  }
}

fs::path default_cache_dir() {
  if (const char* env = std::getenv("SAR2EO_CACHE_DIR"); env && *env) return fs::path(env);
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg && *xdg) {
    return fs::path(xdg) / "sar2eo" / "tiles";
  }
  if (const char* home = std::getenv("HOME"); home && *home) {
    return fs::path(home) / ".cache" / "sar2eo" / "tiles";
  }
  return fs::path(".sar2eo_cache") / "tiles";
}

void print_summary(const IngestSummary& s) {
  std::cout << "scenes " << s.scenes << ", rejected by cloud filter " << s.rejected_cloud
            << ", undersized " << s.undersized << ", occluded chips dropped " << s.chips_occluded
            << "\nsamples " << s.samples << " (train " << s.train_samples << ", test "
            << s.test_samples << ")\n";
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string dataset = "generic";
  std::string input;
  std::string output;
};

int run_prepare(const PrepareArgs& a, const RunConfig& cfg, bool force) {
  claim_output(a.output, force);
  cfg.ingest.validate();
  const DatasetPreset preset = dataset_preset(a.dataset);
  IngestConfig ingest = cfg.ingest;
  if (!cfg.assigned.count("ingest.cloud_filter")) ingest.apply_cloud_filter = preset.apply_cloud_filter;
  const auto scenes = load_scene_directory(a.input, preset, ingest);
  IngestSummary summary;
  build_manifest(scenes, ingest, a.output, a.dataset, &summary);
  RunConfig written = cfg;
  written.ingest = ingest;
  written.write_resolved(a.output);
  print_summary(summary);
  return 0;
}

// ------------------------------------------------------------ scrape-maps

struct ScrapeArgs {
  std::string manifest;
  std::string cache;
  std::string offline_tiles;
};

int run_scrape(const ScrapeArgs& a, const RunConfig& cfg) {
  Manifest manifest = read_manifest(a.manifest);
  std::unique_ptr<TileSource> source;
  if (!a.offline_tiles.empty()) {
    source = std::make_unique<DirectoryTileSource>(a.offline_tiles);
  } else {
    HttpOptions http;
    http.user_agent = cfg.osm.user_agent;
    http.max_retries = cfg.osm.max_retries;
    http.min_interval = std::chrono::milliseconds(cfg.osm.min_interval_ms);
    source = std::make_unique<HttpTileSource>(cfg.osm.server, http);
  }
  TileCache cache(a.cache.empty() ? default_cache_dir() : fs::path(a.cache), *source);
  MapFetchOptions options;
  if (cfg.osm.zoom >= 0) options.zoom = cfg.osm.zoom;
  options.blank_missing = cfg.osm.blank_missing;
  const ScrapeSummary s = scrape_maps(manifest, a.manifest, cache, options);
  cfg.write_resolved(fs::path(a.manifest).parent_path().empty()
                         ? fs::path(".")
                         : fs::path(a.manifest).parent_path());
  std::cout << "map chips " << s.chips << ", skipped without geo " << s.skipped
            << ", tile requests " << source->requests() << ", cache hits " << cache.hits() << "\n";
  return 0;
}

// --------------------------------------------------------------- synthgen

int run_synthgen(const std::string& out, const RunConfig& cfg, bool force) {
  claim_output(out, force);
  IngestSummary summary;
  generate_corpus(cfg.synth.n_scenes, cfg.synth.scene, out, cfg.synth.corpus, &summary);
  cfg.write_resolved(out);
  print_summary(summary);
  return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string manifest;
  std::string out;
  std::string resume;
  int log_every = 10;
};

int run_train(const TrainArgs& a, RunConfig cfg, bool force) {
  if (a.resume.empty()) claim_output(a.out, force);
  if (!cfg.assigned.count("loss.objective")) {
    cfg.train.loss.objective = default_objective(cfg.train.conditioning);
  }
  cfg.train.validate();
  const Manifest manifest = read_manifest(a.manifest);
  FitOptions options;
  if (!a.resume.empty()) options.resume_from = fs::path(a.resume);
  options.on_step = [&](const StepReport& r) {
    if (a.log_every > 0 && r.step % static_cast<std::uint64_t>(a.log_every) == 0) {
      std::cerr << "step " << r.step << " epoch " << r.epoch << "  d " << r.d_loss << "  g_adv "
                << r.g_adv << "  g_fm " << r.g_fm << "  l1 " << r.l1_monitor << "\n";
    }
  };
  cfg.write_resolved(a.out);
  const ModelBundle bundle = fit(manifest, cfg.train, a.out, options);
  std::cout << "trained " << bundle.step << " steps (" << bundle.epoch << " epochs); bundle at "
            << (fs::path(a.out) / kBundleFileName).string() << "\n";
  return 0;
}

// -------------------------------------------------------------- translate

struct TranslateArgs {
  std::string bundle;
  std::string input;     // directory of <id>.sar.chip (+ condition chips)
  std::string manifest;  // alternative: samples of a manifest split
  std::string split = "test";
  std::string conditioning;
  std::string out;
};

// Builds samples from a chip directory; records a failure per sample whose
// declared conditioning files are missing.
std::vector<Sample> samples_from_directory(const fs::path& dir, const Conditioning& conditioning,
                                           std::vector<std::string>& failures) {
  if (!fs::is_directory(dir)) fail(ErrorKind::io, "input directory not found: " + dir.string());
  std::vector<fs::path> sar_files;
  for (const auto& f : fs::directory_iterator(dir)) {
    const std::string name = f.path().filename().string();
    if (name.size() > 9 && name.ends_with(".sar.chip")) sar_files.push_back(f.path());
  }
  std::sort(sar_files.begin(), sar_files.end());
  std::vector<Sample> out;
  for (const auto& sar_path : sar_files) {
    const std::string name = sar_path.filename().string();
    Sample s;
    s.id = name.substr(0, name.size() - 9);
    s.sar = read_chip(sar_path);
    const fs::path eo_path = dir / (s.id + ".eo.chip");
    s.target_eo = fs::exists(eo_path) ? read_chip(eo_path)
                                      : RasterChip::filled(3, s.sar.height(), s.sar.width(), 0.f,
                                                           ValueRange::unit_signed);
    bool ok = true;
    for (ModalityKind kind : conditioning) {
      if (kind == ModalityKind::latlon_planes) {
        if (!s.sar.geo()) {
          failures.push_back(s.id + "\tSAR chip has no geo information for latlon");
          ok = false;
          break;
        }
        s.conditions.emplace_back(Modality{kind}, latlon_to_planes(s.sar.geo()->center_lat,
                                                                   s.sar.geo()->center_lon,
                                                                   s.sar.height(), s.sar.width()));
        continue;
      }
      const char* suffix = kind == ModalityKind::map_rgb ? ".map.chip" : ".ir.chip";
      const fs::path p = dir / (s.id + suffix);
      if (!fs::exists(p)) {
        failures.push_back(s.id + "\tmissing " + p.filename().string());
        ok = false;
        break;
      }
      s.conditions.emplace_back(Modality{kind}, read_chip(p));
    }
    if (ok) out.push_back(std::move(s));
  }
  return out;
}

int run_translate(const TranslateArgs& a, bool force) {
  claim_output(a.out, force);
  ModelBundle bundle = load_bundle(a.bundle);
  const Conditioning conditioning =
      a.conditioning.empty() ? bundle.config.conditioning : parse_conditioning(a.conditioning);
  if (conditioning != bundle.config.conditioning) {
    fail(ErrorKind::config, "bundle expects conditioning '" +
                                conditioning_to_string(bundle.config.conditioning) + "', got '" +
                                conditioning_to_string(conditioning) + "'");
  }

  std::vector<std::string> failures;
  std::vector<Sample> samples;
  if (!a.manifest.empty()) {
    const Manifest m = read_manifest(a.manifest);
    std::vector<const ManifestEntry*> entries;
    if (a.split == "all") {
      for (const auto& e : m.samples) entries.push_back(&e);
    } else {
      entries = m.entries(parse_split(a.split));
    }
    for (const ManifestEntry* e : entries) {
      try {
        samples.push_back(load_sample(m, *e, conditioning));
      } catch (const Error& err) {
        failures.push_back(e->id + "\t" + err.what());
      }
    }
  } else {
    samples = samples_from_directory(a.input, conditioning, failures);
  }

  fs::create_directories(a.out);
  if (samples.empty() && failures.empty()) {
    std::cerr << "warning: no input samples; nothing to translate\n";
  }
  for (const Sample& s : samples) {
    const RasterChip eo = infer(bundle, s);
    const Rgb8Image gen = chip_to_image(eo);
    write_png(fs::path(a.out) / (s.id + ".png"), gen);
    std::vector<Rgb8Image> panels;
    RasterChip sar = s.sar;
    if (sar.channels() > 3) {
      std::vector<float> first(sar.data().begin(), sar.data().begin() + 3 * sar.plane_size());
      sar = RasterChip(3, sar.height(), sar.width(), std::move(first), sar.value_range());
    }
    panels.push_back(chip_to_image(sar));
    for (const RasterChip& c : s.condition_chips()) {
      if (c.channels() == 3 || c.channels() == 1) panels.push_back(chip_to_image(c));
    }
    panels.push_back(gen);
    write_png(fs::path(a.out) / (s.id + ".panel.png"), hstack(panels));
  }
  if (!failures.empty()) {
    std::ofstream f(fs::path(a.out) / "failures.txt", std::ios::trunc);
    for (const auto& line : failures) f << line << "\n";
  }
  RunConfig record;
  record.train = bundle.config;
  record.write_resolved(a.out);
  std::cout << "translated " << samples.size() << " samples, " << failures.size() << " failed\n";
  if (!failures.empty()) {
    std::cerr << "see " << (fs::path(a.out) / "failures.txt").string() << "\n";
    return exit_code(ErrorKind::modality);
  }
  return 0;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string bundle;
  std::string manifest;
  std::string conditioning;
  std::string out;
  std::string label;
};

int run_evaluate(const EvaluateArgs& a, const RunConfig& cfg, bool force) {
  claim_output(a.out, force);
  ModelBundle bundle = load_bundle(a.bundle);
  const Manifest manifest = read_manifest(a.manifest);
  const Conditioning conditioning =
      a.conditioning.empty() ? bundle.config.conditioning : parse_conditioning(a.conditioning);
  auto backbone = load_feature_extractor(cfg.eval.lpips_weights);
  EvalOptions options;
  options.out_dir = fs::path(a.out);
  options.figure_rows = cfg.eval.figure_rows;
  options.run_label = !a.label.empty()          ? a.label
                      : conditioning.empty()    ? "baseline"
                                                : "multi-conditional";
  const MetricReport r = evaluate_run(bundle, manifest, conditioning, *backbone, options);
  RunConfig record = cfg;
  record.train = bundle.config;
  record.write_resolved(a.out);
  std::cout << render_table({r}, TableFormat::markdown);
  return 0;
}

// ----------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
  std::string format;
  std::string figure;
};

int run_report(const ReportArgs& a, const RunConfig& cfg, bool force) {
  claim_output(a.out, force);
  std::vector<MetricReport> reports;
  std::vector<fs::path> dirs;
  for (const auto& run : a.runs) {
    dirs.emplace_back(run);
    reports.push_back(load_report(fs::path(run) / kReportFileName));
  }
  TableFormat format = TableFormat::markdown;
  const std::string fmt = a.format.empty() ? (fs::path(a.out).extension() == ".csv" ? "csv" : "md")
                                           : a.format;
  if (fmt == "csv") {
    format = TableFormat::csv;
  } else if (fmt != "md" && fmt != "markdown") {
    fail(ErrorKind::config, "unknown table format '" + fmt + "'");
  }
  const std::string table = render_table(reports, format);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  {
    std::ofstream f(out, std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot write " + out.string());
    f << table;
  }
  const fs::path figure = a.figure.empty() ? out.parent_path() / (out.stem().string() + ".png")
                                           : fs::path(a.figure);
  write_png(figure, comparison_figure(dirs, cfg.eval.figure_rows));
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sar2eo: SAR to EO translation with map and auxiliary conditioning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sar2eo 0.1.0");

  // prepare
  Common prepare_common;
  PrepareArgs prepare;
  Bindings prepare_b;
  auto* p = app.add_subcommand("prepare", "Chip, filter, split and normalize raw scenes into a manifest");
  add_common(p, prepare_common);
  p->add_option("--dataset", prepare.dataset, "sen12ms | dfc2020 | spacenet6 | generic")
      ->capture_default_str();
  p->add_option("--input", prepare.input, "Directory of scene folders")->required();
  p->add_option("--output", prepare.output, "Output directory")->required();
  prepare_b.option(p, "--seed", "ingest.seed", "Split seed");
  prepare_b.option(p, "--chip-size", "ingest.chip_size",
                   "Chip edge in pixels (published setting: 256 x 256 inputs)");
  prepare_b.option(p, "--stride", "ingest.stride", "Window stride in pixels (default: chip size)");
  prepare_b.option(p, "--v-threshold", "ingest.v_threshold",
                   "Drop scenes whose mean HSV value is at or below this (published setting: 0.2)");
  prepare_b.option(p, "--occlusion-max", "ingest.occlusion_max",
                   "Drop chips with a larger nodata fraction (published setting: 0.10)");
  prepare_b.option(p, "--split", "ingest.split",
                   "Train fraction, split by source scene (published setting: 0.8)");

  // scrape-maps
  Common scrape_common;
  ScrapeArgs scrape;
  Bindings scrape_b;
  auto* s = app.add_subcommand("scrape-maps",
                               "Attach slippy-map raster chips to every sample of a manifest");
  add_common(s, scrape_common);
  s->add_option("--manifest", scrape.manifest, "manifest.jsonl to update")->required();
  scrape_b.option(s, "--server", "osm.server",
                  "Tile server base URL; tiles are fetched as {base}/{z}/{x}/{y}.png "
                  "(published pipeline: OpenStreetMap)");
  s->add_option("--cache", scrape.cache,
                "Tile cache directory (default: $SAR2EO_CACHE_DIR or ~/.cache/sar2eo/tiles)");
  s->add_option("--offline-tiles", scrape.offline_tiles,
                "Serve tiles from a local {z}/{x}/{y}.png tree instead of the network");
  scrape_b.option(s, "--user-agent", "osm.user_agent", "User-Agent for tile requests");
  scrape_b.option(s, "--zoom", "osm.zoom",
                  "Fixed zoom (default: closest tile resolution to the chip ground resolution)");
  scrape_b.flag(s, "--blank-missing", "osm.blank_missing", "true",
                "Fill tiles the server does not have instead of failing");

  // synthgen
  Common synth_common;
  std::string synth_out;
  Bindings synth_b;
  auto* g = app.add_subcommand("synthgen",
                               "Generate a synthetic paired corpus (SAR, EO, map, IR) with SAR ambiguity");
  add_common(g, synth_common);
  g->add_option("--out", synth_out, "Output directory")->required();
  synth_b.option(g, "--n", "synth.n", "Number of scenes");
  synth_b.option(g, "--size", "synth.size", "Scene edge in pixels (>= 64)");
  synth_b.option(g, "--seed", "synth.seed", "Corpus seed");
  synth_b.option(g, "--misalign", "synth.misalign", "Map misalignment in pixels");
  synth_b.option(g, "--speckle", "synth.speckle", "Speckle strength");
  synth_b.option(g, "--shapes", "synth.n_shapes", "Shapes per scene (0 = size based)");
  synth_b.option(g, "--chip-size", "synth.chip_size", "Chip size (0 = whole scene)");
  synth_b.option(g, "--split", "synth.split", "Train fraction");

  // train
  Common train_common;
  TrainArgs train;
  Bindings train_b;
  std::string train_preset = "reference";
  auto* t = app.add_subcommand("train", "Train generator and multi-scale discriminator");
  add_common(t, train_common);
  t->add_option("--manifest", train.manifest, "manifest.jsonl")->required();
  t->add_option("--out", train.out, "Run directory")->required();
  t->add_option("--preset", train_preset,
                "reference: full-width networks, 400 epochs; desk: narrow networks, 5 epochs")
      ->check(CLI::IsMember({"reference", "desk"}))
      ->capture_default_str();
  t->add_option("--resume", train.resume, "Continue from a checkpoint in the run directory");
  t->add_option("--log-every", train.log_every, "Progress line every N steps")->capture_default_str();
  train_b.option(t, "--conditioning", "train.conditioning",
                 "sar | sar+map | sar+ir | sar+latlon | combinations (SAR-only is the baseline)");
  train_b.option(t, "--seed", "train.seed", "Seed for weights, shuffling, dropout");
  train_b.option(t, "--epochs", "train.epochs", "Epochs (published setting: 400)");
  train_b.option(t, "--batch", "train.batch", "Mini-batch size (published setting: 4)");
  train_b.option(t, "--lr", "train.lr", "Adam learning rate (published setting: 2e-4)");
  train_b.option(t, "--beta1", "train.beta1", "Adam beta1 (published setting: 0.5)");
  train_b.option(t, "--beta2", "train.beta2", "Adam beta2 (published setting: 0.999)");
  train_b.option(t, "--max-steps", "train.max_steps", "Stop after this many steps (0 = no limit)");
  train_b.option(t, "--checkpoint-every", "train.checkpoint_every", "Checkpoint period in epochs");
  train_b.option(t, "--objective", "loss.objective",
                 "gan_eq1 | cgan_eq2 | pix2pix_eq3 | multicond_eq4 (default follows conditioning)");
  train_b.option(t, "--lambda-fm", "loss.lambda_fm", "Feature matching weight (pix2pixHD default: 10)");
  train_b.option(t, "--lr-decay-start", "train.lr_decay_start_epoch",
                 "Linear decay from this epoch; off by default since the published constants have none");
  train_b.flag(t, "--no-wall-time", "train.log_wall_time", "false",
               "Log wall_ms as 0 so logs are byte-comparable");

  // translate
  Common translate_common;
  TranslateArgs translate;
  auto* x = app.add_subcommand("translate", "Generate EO images from SAR chips with a trained bundle");
  add_common(x, translate_common);
  x->add_option("--bundle", translate.bundle, "bundle.s2eb or checkpoint")->required();
  auto* x_in = x->add_option("--input", translate.input,
                             "Directory of <id>.sar.chip files plus <id>.map.chip / <id>.ir.chip");
  auto* x_man = x->add_option("--manifest", translate.manifest, "Translate samples of a manifest");
  x_in->excludes(x_man);
  x->add_option("--split", translate.split, "Manifest split: train | test | all")
      ->capture_default_str();
  x->add_option("--conditioning", translate.conditioning,
                "Must match the bundle (default: the bundle's)");
  x->add_option("--out", translate.out, "Output directory")->required();

  // evaluate
  Common evaluate_common;
  EvaluateArgs evaluate;
  Bindings evaluate_b;
  auto* e = app.add_subcommand("evaluate", "PSNR, SSIM and LPIPS of a bundle on the test split");
  add_common(e, evaluate_common);
  e->add_option("--bundle", evaluate.bundle, "bundle.s2eb")->required();
  e->add_option("--manifest", evaluate.manifest, "manifest.jsonl")->required();
  e->add_option("--conditioning", evaluate.conditioning, "Must match the bundle");
  e->add_option("--out", evaluate.out, "Output directory")->required();
  e->add_option("--label", evaluate.label, "Run label in reports");
  evaluate_b.option(e, "--lpips-weights", "eval.lpips_weights",
                    "LPIPS backbone weights file, or 'test-backbone' for the bundled network");
  evaluate_b.option(e, "--figure-rows", "eval.figure_rows", "Rows in figure.png");

  // report
  Common report_common;
  ReportArgs report;
  Bindings report_b;
  auto* r = app.add_subcommand("report",
                               "Comparison table (PSNR / SSIM / LPIPS) and figure grid over runs");
  add_common(r, report_common);
  r->add_option("--runs", report.runs, "Evaluation directories, e.g. baseline then multi")
      ->required()
      ->expected(1, -1);
  r->add_option("--out", report.out, "table.md or table.csv")->required();
  r->add_option("--format", report.format, "md | csv (default: from the extension)");
  r->add_option("--figure", report.figure,
                "Figure path (default: next to the table); columns SAR | reference | one per run");
  report_b.option(r, "--figure-rows", "eval.figure_rows", "Rows in the figure");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    if (*p) return run_prepare(prepare, resolve(prepare_common, prepare_b), prepare_common.force);
    if (*s) return run_scrape(scrape, resolve(scrape_common, scrape_b));
    if (*g) return run_synthgen(synth_out, resolve(synth_common, synth_b), synth_common.force);
    if (*t) {
      RunConfig base;
      if (train_preset == "desk") base.train = TrainConfig::desk();
      return run_train(train, resolve(train_common, train_b, base), train_common.force);
    }
    if (*x) return run_translate(translate, translate_common.force);
    if (*e) return run_evaluate(evaluate, resolve(evaluate_common, evaluate_b), evaluate_common.force);
    if (*r) return run_report(report, resolve(report_common, report_b), report_common.force);
  } catch (const Error& err) {
    std::cerr << "error (" << to_string(err.kind()) << "): " << err.what() << "\n";
    return exit_code(err.kind());
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error (io): " << err.what() << "\n";
    return exit_code(ErrorKind::io);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
