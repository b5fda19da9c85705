#include "s2e/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "s2e/error.hpp"
#include "s2e/rng.hpp"

namespace s2e {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double mean_of(const std::vector<SampleMetrics>& v, double SampleMetrics::*field) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const auto& m : v) s += m.*field;
  return s / static_cast<double>(v.size());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Rgb8Image sar_preview(const RasterChip& sar) {
  if (sar.channels() <= 3) return chip_to_image(sar);
  std::vector<float> first(sar.data().begin(), sar.data().begin() + 3 * sar.plane_size());
  return chip_to_image(RasterChip(3, sar.height(), sar.width(), std::move(first), sar.value_range()));
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

void MetricReport::finalize() {
  std::sort(per_sample.begin(), per_sample.end(),
            [](const SampleMetrics& a, const SampleMetrics& b) { return a.id < b.id; });
  aggregate.psnr = mean_of(per_sample, &SampleMetrics::psnr);
  aggregate.ssim = mean_of(per_sample, &SampleMetrics::ssim);
  aggregate.lpips = mean_of(per_sample, &SampleMetrics::lpips);
}

std::string write_report_json(const MetricReport& report) {
  json j;
  j["run_label"] = report.run_label;
  j["conditioning"] = report.conditioning;
  j["backbone"] = report.backbone;
  j["aggregate"] = {{"psnr", report.aggregate.psnr},
                    {"ssim", report.aggregate.ssim},
                    {"lpips", report.aggregate.lpips},
                    {"count", report.per_sample.size()}};
  json samples = json::array();
  for (const auto& m : report.per_sample) {
    samples.push_back({{"id", m.id}, {"psnr", m.psnr}, {"ssim", m.ssim}, {"lpips", m.lpips}});
  }
  j["per_sample"] = std::move(samples);
  return j.dump(2) + "\n";
}

MetricReport parse_report_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricReport r;
    r.run_label = j.at("run_label").get<std::string>();
    r.conditioning = j.at("conditioning").get<std::string>();
    r.backbone = j.at("backbone").get<std::string>();
    for (const auto& s : j.at("per_sample")) {
      r.per_sample.push_back({s.at("id").get<std::string>(), s.at("psnr").get<double>(),
                              s.at("ssim").get<double>(), s.at("lpips").get<double>()});
    }
    const auto& a = j.at("aggregate");
    r.aggregate = {a.at("psnr").get<double>(), a.at("ssim").get<double>(),
                   a.at("lpips").get<double>()};
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, std::string("malformed metric report: ") + e.what());
  }
}

void save_report(const MetricReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << write_report_json(report);
}

MetricReport load_report(const std::filesystem::path& path) {
  return parse_report_json(read_text(path));
}

SampleMetrics score_pair(const std::string& id, const RasterChip& generated,
                         const RasterChip& reference, FeatureExtractor& backbone) {
  SampleMetrics m;
  m.id = id;
  m.psnr = psnr(generated, reference);
  m.ssim = std::clamp(ssim(generated, reference), 0.0, 1.0);
  m.lpips = lpips(generated, reference, backbone);
  return m;
}

MetricReport evaluate_samples(const EoGenerator& generator, const Manifest& manifest,
                              const Conditioning& conditioning, FeatureExtractor& backbone,
                              const EvalOptions& options) {
  auto entries = manifest.entries(Split::test);
  if (entries.empty()) fail(ErrorKind::empty_corpus, "the manifest has no test samples");
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry* a, const ManifestEntry* b) { return a->id < b->id; });

  MetricReport report;
  report.run_label = options.run_label;
  report.conditioning = conditioning_to_string(conditioning);
  report.backbone = backbone.name();

  std::vector<Rgb8Image> rows;
  for (const ManifestEntry* e : entries) {
    const Sample sample = load_sample(manifest, *e, conditioning);
    const RasterChip generated = generator(sample);
    report.per_sample.push_back(score_pair(sample.id, generated, sample.target_eo, backbone));
    if (!options.out_dir) continue;
    const auto& dir = *options.out_dir;
    const Rgb8Image sar = sar_preview(sample.sar);
    const Rgb8Image ref = chip_to_image(sample.target_eo);
    const Rgb8Image gen = chip_to_image(generated);
    write_png(dir / "generated" / (sample.id + ".png"), gen);
    write_png(dir / "panels" / (sample.id + ".sar.png"), sar);
    write_png(dir / "panels" / (sample.id + ".ref.png"), ref);
    if (static_cast<int>(rows.size()) < options.figure_rows) {
      const std::vector<Rgb8Image> panels{sar, ref, gen};
      rows.push_back(hstack(panels));
    }
  }
  report.finalize();
  if (options.out_dir) {
    save_report(report, *options.out_dir / kReportFileName);
    if (!rows.empty()) write_png(*options.out_dir / "figure.png", vstack(rows));
  }
  return report;
}

RasterChip infer(ModelBundle& bundle, const Sample& sample) {
  const auto x = conditioned_input(sample, bundle.config.conditioning);
  const auto objective = bundle.config.loss.objective;
  const auto z = generator_input(objective, x, derive_seed(bundle.config.seed, fnv1a(sample.id)));
  bundle.generator->check_input(z.c(), z.h(), z.w());
  nn::Context ctx{false, 0};
  return tensor_to_chip(bundle.generator->forward(z, ctx), 0, ValueRange::unit_signed);
}

MetricReport evaluate_run(ModelBundle& bundle, const Manifest& manifest,
                          const Conditioning& conditioning, FeatureExtractor& backbone,
                          const EvalOptions& options) {
  if (conditioning != bundle.config.conditioning) {
    fail(ErrorKind::config, "bundle was trained with conditioning '" +
                                conditioning_to_string(bundle.config.conditioning) +
                                "' but evaluation asked for '" +
                                conditioning_to_string(conditioning) + "'");
  }
  if (manifest.sar_kind != bundle.sar_kind) {
    fail(ErrorKind::config, "manifest SAR kind differs from the bundle's");
  }
  const EoGenerator gen = [&bundle](const Sample& s) { return infer(bundle, s); };
  return evaluate_samples(gen, manifest, conditioning, backbone, options);
}

std::string render_table(const std::vector<MetricReport>& reports, TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::csv) {
    out << "run,conditioning,psnr,ssim,lpips,samples\n";
    for (const auto& r : reports) {
      out << r.run_label << ',' << r.conditioning << ',' << fixed(r.aggregate.psnr, 4) << ','
          << fixed(r.aggregate.ssim, 4) << ',' << fixed(r.aggregate.lpips, 4) << ','
          << r.per_sample.size() << '\n';
    }
    return out.str();
  }
  out << "| Run | Conditioning | PSNR (dB) higher is better | SSIM higher is better | "
         "LPIPS lower is better | Samples |\n";
  out << "|---|---|---:|---:|---:|---:|\n";
  for (const auto& r : reports) {
    out << "| " << r.run_label << " | " << r.conditioning << " | " << fixed(r.aggregate.psnr, 2)
        << " | " << fixed(r.aggregate.ssim, 3) << " | " << fixed(r.aggregate.lpips, 3) << " | "
        << r.per_sample.size() << " |\n";
  }
  return out.str();
}

Rgb8Image comparison_figure(const std::vector<std::filesystem::path>& run_dirs, int max_rows) {
  if (run_dirs.empty()) fail(ErrorKind::config, "comparison figure needs at least one run");
  std::vector<std::set<std::string>> ids(run_dirs.size());
  for (std::size_t i = 0; i < run_dirs.size(); ++i) {
    const auto gen_dir = run_dirs[i] / "generated";
    if (!std::filesystem::is_directory(gen_dir)) {
      fail(ErrorKind::io, "no generated images under " + run_dirs[i].string());
    }
    for (const auto& f : std::filesystem::directory_iterator(gen_dir)) {
      if (f.path().extension() == ".png") ids[i].insert(f.path().stem().string());
    }
  }
  std::vector<std::string> common;
  for (const auto& id : ids[0]) {
    bool everywhere = true;
    for (std::size_t i = 1; i < ids.size(); ++i) everywhere = everywhere && ids[i].count(id) > 0;
    if (everywhere) common.push_back(id);
  }
  if (common.empty()) fail(ErrorKind::validation, "runs share no generated samples");
  std::vector<Rgb8Image> rows;
  for (const auto& id : common) {
    if (static_cast<int>(rows.size()) >= max_rows) break;
    std::vector<Rgb8Image> panels;
    panels.push_back(read_png(run_dirs[0] / "panels" / (id + ".sar.png")));
    panels.push_back(read_png(run_dirs[0] / "panels" / (id + ".ref.png")));
    for (const auto& dir : run_dirs) panels.push_back(read_png(dir / "generated" / (id + ".png")));
    rows.push_back(hstack(panels));
  }
  return vstack(rows);
}

}  // namespace s2e
