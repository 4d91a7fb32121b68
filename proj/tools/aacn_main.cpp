// Command-line surface for the attention-aware part feature pipeline:
// synth -> gen-gt -> train-ppa -> train-head -> extract -> match/eval, plus
// viz for PGM export of attention maps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "aacn/afc.hpp"
#include "aacn/config.hpp"
#include "aacn/dataset_io.hpp"
#include "aacn/matcher.hpp"
#include "aacn/pipeline.hpp"
#include "aacn/ppa.hpp"
#include "aacn/synth.hpp"
#include "aacn/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace aacn;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string grid, image, band, metric, attn, mode;
    double sigma_gauss = -1.0, mu1 = -1.0, mu2 = -1.0, lr = -1.0, margin = -1.0;
    long long seed = -1;
    int epochs = -1, steps = -1, threads = -1;
};

// Config file first, then explicit flags on top (flags win).
RunConfig resolve_config(const CommonFlags& f) {
    RunConfig cfg;
    if (!f.config_path.empty()) cfg.load_file(f.config_path);
    if (!f.grid.empty()) cfg.apply("grid", f.grid);
    if (!f.image.empty()) cfg.apply("image", f.image);
    if (!f.band.empty()) cfg.apply("band", f.band);
    if (!f.metric.empty()) cfg.apply("metric", f.metric);
    if (!f.attn.empty()) cfg.apply("attn", f.attn);
    if (f.sigma_gauss > 0) cfg.apply("sigma_gauss", std::to_string(f.sigma_gauss));
    if (f.mu1 >= 0) cfg.mu1 = f.mu1;
    if (f.mu2 >= 0) cfg.mu2 = f.mu2;
    if (f.lr >= 0) cfg.lr = f.lr;
    if (f.margin > 0) cfg.margin = f.margin;
    if (f.seed >= 0) cfg.seed = static_cast<uint64_t>(f.seed);
    if (f.epochs >= 0) cfg.epochs = f.epochs;
    if (f.steps >= 0) cfg.steps = f.steps;
    if (f.threads >= 1) cfg.threads = f.threads;
    return cfg;
}

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "config file (key=value lines or flat JSON)");
    cmd->add_option("--grid", f.grid, "attention grid as HxW (default 14x6)");
    cmd->add_option("--image", f.image, "image size as HxW (default 448x192)");
    cmd->add_option("--band", f.band, "non-rigid bandwidth in cells, or 'auto'");
    cmd->add_option("--sigma", f.sigma_gauss, "keypoint Gaussian spread in cells");
    cmd->add_option("--seed", f.seed, "RNG seed");
    cmd->add_option("--threads", f.threads, "worker threads for per-sample stages");
}

std::vector<PpaTrainSample> load_ppa_samples(const fs::path& manifest_path, const RunConfig& cfg) {
    AttentionOptions opts;
    opts.source = AttentionSource::gt;
    opts.gt = cfg.gt_config();
    std::vector<DatasetSample> dataset = load_dataset(manifest_path, opts);
    std::vector<PpaTrainSample> samples;
    samples.reserve(dataset.size());
    for (DatasetSample& d : dataset) {
        GtConfig gt_cfg = cfg.gt_config();
        if (gt_cfg.sigma_band <= 0.0) gt_cfg.sigma_band = default_band(d.pose, gt_cfg);
        PpaTrainSample s;
        s.id = d.meta.id;
        s.features = d.features.to_tensor();
        s.gt = rasterize_ppa_gt(d.pose, gt_cfg);
        samples.push_back(std::move(s));
    }
    return samples;
}

int run_synth(const CommonFlags& flags, const std::string& out_dir, int ids, int samples_per_id,
              double occlusion_rate, double clutter, int channels) {
    RunConfig cfg = resolve_config(flags);
    BenchmarkConfig bench;
    bench.n_ids = ids;
    bench.samples_per_id = samples_per_id;
    bench.occlusion_rate = occlusion_rate;
    bench.clutter_level = clutter;
    bench.channels = channels;
    bench.seed = cfg.seed;
    bench.gt = cfg.gt_config();
    bench.band_auto = cfg.band_auto();
    if (bench.band_auto) bench.gt.sigma_band = 1.0; // validated placeholder; resolved per pose
    bench.out_dir = out_dir;
    Manifest manifest = generate_benchmark(bench);
    std::cout << "wrote " << manifest.samples.size() << " samples to " << out_dir << "\n";
    return 0;
}

int run_gen_gt(const CommonFlags& flags, const std::string& poses_path, const std::string& out_dir) {
    RunConfig cfg = resolve_config(flags);
    const std::vector<NamedPose> poses = read_pose_jsonl(poses_path);
    fs::create_directories(out_dir);
    for (const NamedPose& np : poses) {
        GtConfig gt_cfg = cfg.gt_config();
        if (gt_cfg.sigma_band <= 0.0) gt_cfg.sigma_band = default_band(np.pose, gt_cfg);
        const PpaGroundTruth gt = rasterize_ppa_gt(np.pose, gt_cfg);
        Tensor stacked({kKeypointCount + kPartCount, gt_cfg.map_h, gt_cfg.map_w});
        std::copy(gt.keypoints.data.begin(), gt.keypoints.data.end(), stacked.data.begin());
        std::copy(gt.nonrigid.data.begin(), gt.nonrigid.data.end(),
                  stacked.data.begin() + gt.keypoints.size());
        std::copy(gt.rigid.data.begin(), gt.rigid.data.end(),
                  stacked.data.begin() + gt.keypoints.size() + gt.nonrigid.size());
        write_tensor(fs::path(out_dir) / (np.id + ".gt.bin"), stacked);
    }
    std::cout << "wrote ground truth for " << poses.size() << " poses to " << out_dir << "\n";
    return 0;
}

int run_train_ppa(const CommonFlags& flags, const std::string& manifest_path, const std::string& out_path,
                  int holdout) {
    RunConfig cfg = resolve_config(flags);
    std::vector<PpaTrainSample> samples = load_ppa_samples(manifest_path, cfg);
    if (holdout < 0 || holdout >= static_cast<int>(samples.size()))
        throw std::invalid_argument("holdout must be smaller than the sample count");
    std::vector<PpaTrainSample> eval_samples(samples.end() - holdout, samples.end());
    samples.resize(samples.size() - static_cast<size_t>(holdout));

    const int channels = samples.front().features.dim(0);
    PpaNet net(channels, cfg.seed);
    PpaTrainConfig train_cfg;
    train_cfg.epochs = cfg.epochs;
    train_cfg.lr = cfg.lr;
    train_cfg.weights = {cfg.mu1, cfg.mu2};
    train_cfg.seed = cfg.seed;
    const PpaTrainResult result = train_ppa(net, samples, train_cfg);
    for (size_t e = 0; e < result.epoch_loss.size(); ++e) {
        if (e % 20 == 0 || e + 1 == result.epoch_loss.size())
            std::cout << "epoch " << e << " loss " << result.epoch_loss[e] << "\n";
    }
    if (!eval_samples.empty()) {
        auto [s1, s2] = ppa_stage_losses(net, eval_samples, train_cfg.weights);
        std::cout << "holdout stage-1 loss " << s1 << ", stage-2 loss " << s2 << "\n";
    }
    save_parameters(out_path, net.parameters());
    std::cout << "checkpoint written to " << out_path << "\n";
    return 0;
}

int run_train_head(const CommonFlags& flags, const std::string& manifest_path, const std::string& out_path,
                   const std::string& ppa_ckpt, const std::string& split, bool with_gcn,
                   const std::string& gcn_out, bool joint, int gcn_hidden, int gcn_channels) {
    RunConfig cfg = resolve_config(flags);
    AttentionOptions opts;
    opts.source = cfg.attention;
    opts.gt = cfg.gt_config();
    std::optional<PpaNet> ppa;
    if (!ppa_ckpt.empty()) {
        ppa.emplace(load_ppa_checkpoint(ppa_ckpt));
        opts.ppa = &*ppa;
    }
    std::vector<DatasetSample> dataset = load_dataset(manifest_path, opts);

    std::vector<const DatasetSample*> selected;
    for (const DatasetSample& d : dataset)
        if (split == "all" || d.meta.split == split) selected.push_back(&d);
    if (selected.empty()) throw std::invalid_argument("no samples in split '" + split + "'");

    CompositionTrainConfig train_cfg;
    train_cfg.steps = cfg.steps;
    train_cfg.lr = cfg.lr;
    train_cfg.margin = cfg.margin;
    train_cfg.seed = cfg.seed;

    if (!with_gcn) {
        std::vector<LabeledParts> labeled;
        labeled.reserve(selected.size());
        for (const DatasetSample* d : selected)
            labeled.push_back({d->meta.identity, align_features(d->features, d->attention)});
        CompositionHead head(kPartCount, dataset.front().features.channels, cfg.seed);
        const std::vector<double> history = train_composition(labeled, head, train_cfg);
        std::cout << "step 0 loss " << history.front() << ", step " << history.size() - 1 << " loss "
                  << history.back() << "\n";
        save_parameters(out_path, head.parameters());
        std::cout << "head checkpoint written to " << out_path << "\n";
        return 0;
    }

    // Progressive schedule with the toy context network: train it on the
    // verification loss, then the head on its fixed output, then optionally
    // fine-tune everything jointly.
    std::vector<JointSample> joint_samples;
    joint_samples.reserve(selected.size());
    for (const DatasetSample* d : selected) joint_samples.push_back({d->meta.identity, d->features, d->attention});

    GcnNet gcn(dataset.front().features.channels, gcn_hidden, gcn_channels, cfg.seed);
    std::vector<double> gcn_history = train_gcn(joint_samples, gcn, train_cfg);
    std::cout << "context: step 0 loss " << gcn_history.front() << ", final loss " << gcn_history.back() << "\n";

    std::vector<LabeledParts> labeled;
    labeled.reserve(selected.size());
    for (const DatasetSample* d : selected)
        labeled.push_back({d->meta.identity, align_features(gcn.apply(d->features), d->attention)});
    CompositionHead head(kPartCount, gcn_channels, cfg.seed + 1);
    std::vector<double> head_history = train_composition(labeled, head, train_cfg);
    std::cout << "head: step 0 loss " << head_history.front() << ", final loss " << head_history.back() << "\n";

    if (joint) {
        CompositionTrainConfig joint_cfg = train_cfg;
        joint_cfg.steps = std::max(1, cfg.steps / 4);
        joint_cfg.lr = cfg.lr * 0.1;
        std::vector<double> joint_history = train_composition_joint(joint_samples, gcn, head, joint_cfg);
        std::cout << "joint: step 0 loss " << joint_history.front() << ", final loss " << joint_history.back()
                  << "\n";
    }
    save_parameters(out_path, head.parameters());
    if (!gcn_out.empty()) save_parameters(gcn_out, gcn.parameters());
    std::cout << "head checkpoint written to " << out_path << "\n";
    return 0;
}

int run_extract(const CommonFlags& flags, const std::string& manifest_path, const std::string& out_dir,
                const std::string& ckpt, const std::string& ppa_ckpt, const std::string& gcn_ckpt,
                const std::string& variant_name) {
    RunConfig cfg = resolve_config(flags);
    AttentionOptions opts;
    opts.source = cfg.attention;
    opts.gt = cfg.gt_config();
    std::optional<PpaNet> ppa;
    if (!ppa_ckpt.empty()) {
        ppa.emplace(load_ppa_checkpoint(ppa_ckpt));
        opts.ppa = &*ppa;
    }
    const FeatureVariant variant = parse_variant(variant_name);
    std::optional<CompositionHead> head;
    if (!ckpt.empty()) head.emplace(load_head_checkpoint(ckpt));
    std::optional<GcnNet> gcn;
    if (!gcn_ckpt.empty()) gcn.emplace(load_gcn_checkpoint(gcn_ckpt));

    const std::vector<DatasetSample> dataset = load_dataset(manifest_path, opts);
    extract_features(dataset, out_dir, variant, head ? &*head : nullptr, gcn ? &*gcn : nullptr, cfg.threads);
    std::cout << "extracted " << dataset.size() << " feature files to " << out_dir << "\n";
    return 0;
}

int run_match(const CommonFlags& flags, const std::string& query_dir, const std::string& gallery_dir,
              const std::string& report_path, bool no_cross_camera, bool print_report) {
    RunConfig cfg = resolve_config(flags);
    EvalOptions options;
    options.metric = cfg.metric;
    options.mode = flags.mode.empty() ? QueryMode::single : parse_query_mode(flags.mode);
    options.cross_camera_filter = !no_cross_camera;

    const std::vector<GalleryEntry> queries = load_feature_dir(query_dir);
    const std::vector<GalleryEntry> gallery = load_feature_dir(gallery_dir);
    const EvalReport report = evaluate(queries, gallery, options);
    for (const std::string& id : report.rejected)
        std::cerr << "warning: query '" << id << "' has no admissible gallery match, skipped\n";

    const std::string json = report_to_json(report);
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        if (!os) throw std::runtime_error("cannot open report file '" + report_path + "'");
        os << json << "\n";
    }
    if (print_report) std::cout << json << "\n";
    return 0;
}

int run_viz(const CommonFlags& flags, const std::string& input, const std::string& poses_path,
            const std::string& sample_id, const std::string& out_dir) {
    RunConfig cfg = resolve_config(flags);
    fs::create_directories(out_dir);
    if (!input.empty()) {
        const Tensor t = read_tensor(input);
        if (t.rank() != 3) throw std::invalid_argument("viz: expected a [C,H,W] tensor file");
        for (int c = 0; c < t.dim(0); ++c) {
            AttentionMap m(t.dim(1), t.dim(2));
            std::copy(t.data.begin() + static_cast<long>(c) * t.dim(1) * t.dim(2),
                      t.data.begin() + static_cast<long>(c + 1) * t.dim(1) * t.dim(2), m.values.begin());
            char name[32];
            std::snprintf(name, sizeof(name), "channel_%02d.pgm", c);
            write_pgm(fs::path(out_dir) / name, m);
        }
        std::cout << "wrote " << t.dim(0) << " maps to " << out_dir << "\n";
        return 0;
    }
    if (poses_path.empty()) throw std::invalid_argument("viz: provide --input or --poses");
    for (const NamedPose& np : read_pose_jsonl(poses_path)) {
        if (!sample_id.empty() && np.id != sample_id) continue;
        GtConfig gt_cfg = cfg.gt_config();
        if (gt_cfg.sigma_band <= 0.0) gt_cfg.sigma_band = default_band(np.pose, gt_cfg);
        for (int k = 0; k < kKeypointCount; ++k)
            write_pgm(fs::path(out_dir) / (np.id + "_k" + std::to_string(k) + ".pgm"),
                      gaussian_keypoint_map(np.pose, k, gt_cfg));
        const std::vector<AttentionMap> parts = all_part_gt_maps(np.pose, gt_cfg);
        for (int p = 0; p < kPartCount; ++p)
            write_pgm(fs::path(out_dir) / (np.id + "_" + std::string(part_name(p)) + ".pgm"),
                      parts[static_cast<size_t>(p)]);
    }
    std::cout << "wrote attention maps to " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-aware part feature pipeline for person re-identification"};
    app.require_subcommand(1);

    CommonFlags flags;

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic benchmark");
    std::string out_dir, manifest_path, poses_path;
    int ids = 10, samples_per_id = 4, channels = 256;
    double occlusion_rate = 0.0, clutter = 0.0;
    synth_cmd->add_option("--out", out_dir, "output directory")->required();
    synth_cmd->add_option("--ids", ids, "identity count");
    synth_cmd->add_option("--samples", samples_per_id, "samples per identity");
    synth_cmd->add_option("--occlusion-rate", occlusion_rate, "per-part occlusion probability");
    synth_cmd->add_option("--clutter", clutter, "background clutter stddev");
    synth_cmd->add_option("--channels", channels, "feature channels");
    add_common_flags(synth_cmd, flags);

    // gen-gt
    auto* gen_gt_cmd = app.add_subcommand("gen-gt", "rasterize ground-truth attention maps from poses");
    gen_gt_cmd->add_option("--poses", poses_path, "pose annotation JSONL")->required();
    gen_gt_cmd->add_option("--out", out_dir, "output directory")->required();
    add_common_flags(gen_gt_cmd, flags);

    // train-ppa
    auto* train_ppa_cmd = app.add_subcommand("train-ppa", "train the part attention predictor");
    std::string ckpt_out;
    int holdout = 0;
    train_ppa_cmd->add_option("--manifest", manifest_path, "benchmark manifest")->required();
    train_ppa_cmd->add_option("--out", ckpt_out, "checkpoint output path")->required();
    train_ppa_cmd->add_option("--epochs", flags.epochs, "training epochs");
    train_ppa_cmd->add_option("--lr", flags.lr, "learning rate");
    train_ppa_cmd->add_option("--mu1", flags.mu1, "non-rigid loss weight");
    train_ppa_cmd->add_option("--mu2", flags.mu2, "rigid loss weight");
    train_ppa_cmd->add_option("--holdout", holdout, "samples held out from the end of the manifest");
    add_common_flags(train_ppa_cmd, flags);

    // train-head
    auto* train_head_cmd = app.add_subcommand("train-head", "train the feature composition head");
    std::string ppa_ckpt, split = "gallery", gcn_out;
    bool with_gcn = false, joint = false;
    int gcn_hidden = 16, gcn_channels = 32;
    train_head_cmd->add_option("--manifest", manifest_path, "benchmark manifest")->required();
    train_head_cmd->add_option("--out", ckpt_out, "head checkpoint output path")->required();
    train_head_cmd->add_option("--attn", flags.attn, "attention source: gt|ppa|file");
    train_head_cmd->add_option("--ppa-ckpt", ppa_ckpt, "PPA checkpoint (for --attn ppa)");
    train_head_cmd->add_option("--split", split, "training split: gallery|query|all");
    train_head_cmd->add_option("--steps", flags.steps, "training steps");
    train_head_cmd->add_option("--lr", flags.lr, "learning rate");
    train_head_cmd->add_option("--margin", flags.margin, "contrastive margin");
    train_head_cmd->add_flag("--gcn", with_gcn, "train a toy context network first (progressive schedule)");
    train_head_cmd->add_option("--gcn-out", gcn_out, "context network checkpoint output path");
    train_head_cmd->add_flag("--joint", joint, "jointly fine-tune context network and head");
    train_head_cmd->add_option("--gcn-hidden", gcn_hidden, "context network hidden channels");
    train_head_cmd->add_option("--gcn-channels", gcn_channels, "context network output channels");
    add_common_flags(train_head_cmd, flags);

    // extract
    auto* extract_cmd = app.add_subcommand("extract", "extract per-image feature files");
    std::string head_ckpt, gcn_ckpt, variant = "composed";
    extract_cmd->add_option("--manifest", manifest_path, "benchmark manifest")->required();
    extract_cmd->add_option("--out", out_dir, "output directory")->required();
    extract_cmd->add_option("--attn", flags.attn, "attention source: gt|ppa|file");
    extract_cmd->add_option("--ckpt", head_ckpt, "composition head checkpoint");
    extract_cmd->add_option("--ppa-ckpt", ppa_ckpt, "PPA checkpoint (for --attn ppa)");
    extract_cmd->add_option("--gcn-ckpt", gcn_ckpt, "context network checkpoint");
    extract_cmd->add_option("--variant", variant, "feature variant: composed|aligned|global");
    add_common_flags(extract_cmd, flags);

    // match / eval
    std::string query_dir, gallery_dir, report_path;
    bool no_cross_camera = false;
    auto* match_cmd = app.add_subcommand("match", "rank gallery against queries, write a report");
    match_cmd->add_option("--query-dir", query_dir, "query feature directory")->required();
    match_cmd->add_option("--gallery-dir", gallery_dir, "gallery feature directory")->required();
    match_cmd->add_option("--metric", flags.metric, "euclidean|cosine");
    match_cmd->add_option("--mode", flags.mode, "single|multi");
    match_cmd->add_option("--report", report_path, "report JSON output path")->required();
    match_cmd->add_flag("--no-cross-camera", no_cross_camera, "disable the cross-camera filter");
    add_common_flags(match_cmd, flags);

    auto* eval_cmd = app.add_subcommand("eval", "run the evaluation protocol, print the report");
    eval_cmd->add_option("--query-dir", query_dir, "query feature directory")->required();
    eval_cmd->add_option("--gallery-dir", gallery_dir, "gallery feature directory")->required();
    eval_cmd->add_option("--metric", flags.metric, "euclidean|cosine");
    eval_cmd->add_option("--mode", flags.mode, "single|multi");
    eval_cmd->add_option("--report", report_path, "optional report JSON output path");
    eval_cmd->add_flag("--no-cross-camera", no_cross_camera, "disable the cross-camera filter");
    add_common_flags(eval_cmd, flags);

    // viz
    std::string viz_input, viz_sample;
    auto* viz_cmd = app.add_subcommand("viz", "export attention maps as PGM images");
    viz_cmd->add_option("--input", viz_input, "attention/feature tensor file");
    viz_cmd->add_option("--poses", poses_path, "pose annotation JSONL to rasterize");
    viz_cmd->add_option("--id", viz_sample, "restrict --poses rendering to one sample id");
    viz_cmd->add_option("--out", out_dir, "output directory")->required();
    add_common_flags(viz_cmd, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2; // usage errors exit with 2
    }

    try {
        if (synth_cmd->parsed())
            return run_synth(flags, out_dir, ids, samples_per_id, occlusion_rate, clutter, channels);
        if (gen_gt_cmd->parsed()) return run_gen_gt(flags, poses_path, out_dir);
        if (train_ppa_cmd->parsed()) return run_train_ppa(flags, manifest_path, ckpt_out, holdout);
        if (train_head_cmd->parsed())
            return run_train_head(flags, manifest_path, ckpt_out, ppa_ckpt, split, with_gcn, gcn_out, joint,
                                  gcn_hidden, gcn_channels);
        if (extract_cmd->parsed())
            return run_extract(flags, manifest_path, out_dir, head_ckpt, ppa_ckpt, gcn_ckpt, variant);
        if (match_cmd->parsed())
            return run_match(flags, query_dir, gallery_dir, report_path, no_cross_camera, false);
        if (eval_cmd->parsed()) return run_match(flags, query_dir, gallery_dir, report_path, no_cross_camera, true);
        if (viz_cmd->parsed()) return run_viz(flags, viz_input, poses_path, viz_sample, out_dir);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        // Missing or unreadable inputs are usage errors; malformed content is
        // a computational failure.
        return e.code == IoErrorCode::open_failed ? 2 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
