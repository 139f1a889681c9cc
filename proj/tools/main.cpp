#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dataset.hpp"
#include "pseg/augmentation.hpp"
#include "pseg/error.hpp"
#include "pseg/gradcheck_suite.hpp"
#include "pseg/image_io.hpp"
#include "pseg/parallel.hpp"
#include "pseg/phantom.hpp"
#include "pseg/train.hpp"

namespace fs = std::filesystem;
using namespace pseg;

namespace {

constexpr double kGradTolerance = 1e-5;

// Attaches flat `key = value` entries to whichever subcommand is running, so
// config keys are the long flag names without dashes.
class FlatConfig : public CLI::ConfigINI {
 public:
  explicit FlatConfig(const CLI::App* app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    auto items = CLI::ConfigINI::from_config(in);
    const auto subs = app_->get_subcommands();
    for (auto& item : items) {
      if (!item.parents.empty()) throw CLI::ConfigError("config sections are not supported: " + item.fullname());
      if (!subs.empty()) item.parents = {subs.front()->get_name()};
    }
    return items;
  }

 private:
  const CLI::App* app_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void add_window(CLI::App* cmd, InputWindow& w) {
  cmd->add_option("--window-lo", w.lo, "CT value mapped to 0")->capture_default_str();
  cmd->add_option("--window-hi", w.hi, "CT value mapped to 1")->capture_default_str();
}

std::string fmt_metric(const std::optional<double>& v, const char* unit) {
  if (!v) return "NA";
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f%s", *v, unit);
  return buf;
}

// ---- phantom ----

struct PhantomOpts {
  fs::path out;
  PhantomSpec spec;
};

void run_phantom(const PhantomOpts& o) {
  const auto phantoms = make_phantoms(o.spec);
  fs::create_directories(o.out);
  std::vector<cli::ManifestEntry> manifest;
  for (const auto& p : phantoms) {
    const std::string id = p.data.patient_id;
    write_volume(p.data.ct, o.out / (id + "_ct.mhd"));
    write_volume(p.data.pet, o.out / (id + "_pet.mhd"));
    manifest.push_back({id, id + "_ct.mhd", id + "_pet.mhd"});
  }
  cli::write_manifest(manifest, o.out / "manifest.txt");
  std::cout << "wrote " << phantoms.size() << " phantom patients and " << (o.out / "manifest.txt").string() << "\n";
}

// ---- prepare ----

struct PrepareOpts {
  fs::path manifest;
  fs::path out;
  double fraction = 0.2;
  std::size_t train_patients = 21;
  std::uint64_t seed = 7;
  std::size_t min_fg = 1;
};

void run_prepare(const PrepareOpts& o) {
  const auto entries = cli::read_manifest(o.manifest);
  std::vector<std::string> ids;
  for (const auto& e : entries) ids.push_back(e.patient_id);
  const PatientSplit split = patient_split(ids, o.train_patients, o.seed);
  std::map<std::string, std::string> role;
  for (const auto& id : split.train) role[id] = "train";
  for (const auto& id : split.test) role[id] = "test";

  fs::create_directories(o.out);
  cli::reset_slice_dir(o.out / "train");
  cli::reset_slice_dir(o.out / "test");
  std::string split_csv;
  std::map<std::string, std::size_t> slices;
  for (const auto& e : entries) {
    const PatientDataset patient{e.patient_id, read_volume(e.ct), read_volume(e.pet)};
    patient.validate();
    const std::string& r = role.at(e.patient_id);
    split_csv += e.patient_id + "," + r + "\n";
    for (const auto& s : label_patient(patient, {o.fraction}, o.min_fg)) {
      cli::write_slice(s, o.out / r, slice_id(s));
      ++slices[r];
    }
  }
  write_text(o.out / "split.csv", split_csv);
  std::cout << split.train.size() << " train patients (" << slices["train"] << " slices), " << split.test.size()
            << " test patients (" << slices["test"] << " slices)\n";
}

// ---- augment ----

struct AugmentOpts {
  fs::path data;
  fs::path out;
  AugmentationPlan plan;
  std::string noise = "none";
  unsigned threads = 1;
};

void run_augment(AugmentOpts o) {
  o.plan.noise_kind = parse_noise_kind(o.noise);
  o.plan.validate();
  const auto slices = cli::read_slices(o.data);
  cli::reset_slice_dir(o.out);
  std::size_t written = 0;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    AugmentationPlan plan = o.plan;
    plan.seed = mix_seed(o.plan.seed, i);  // distinct noise draws per slice
    const std::string stem = slice_id(slices[i]);
    for (const auto& a : augment_pair(slices[i], plan, o.threads)) {
      cli::write_slice(a.slice, o.out, stem + "_" + std::to_string(a.descriptor_index));
      ++written;
    }
  }
  std::cout << "wrote " << written << " slices (" << plan_length(o.plan) << " per input)\n";
}

// ---- train ----

struct TrainOpts {
  fs::path data;
  fs::path out;
  fs::path loss_csv;
  std::string arch = "fcn";
  int size = 64;
  int base_channels = 8;
  int blocks_per_stage = 2;
  std::size_t log_every = 100;
  TrainConfig cfg;
};

std::unique_ptr<models::SegmentationModel> build_model(const TrainOpts& o) {
  if (o.arch == "fcn") return models::build_fcn_mini({o.size, o.base_channels, 2}, o.cfg.model_seed);
  return models::build_atrous_mini({o.size, o.base_channels, o.blocks_per_stage, 2, {2, 4}}, o.cfg.model_seed);
}

void run_train(TrainOpts o) {
  o.cfg.checkpoint_path = o.out;
  o.cfg.validate();
  auto model = build_model(o);
  std::vector<LabeledSlice> data;
  for (const auto& s : cli::read_slices(o.data)) data.push_back(resize_to(s, o.size));
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  std::cerr << o.arch << "-mini, " << model->parameter_count() << " parameters, " << data.size()
            << " training slices at " << o.size << "x" << o.size << "\n";
  const auto progress = [&](std::size_t it, double loss) {
    if (o.log_every > 0 && ((it + 1) % o.log_every == 0 || it == 0)) {
      std::fprintf(stderr, "iteration %zu loss %.6f\n", it + 1, loss);
    }
  };
  const TrainReport report = train(*model, data, o.cfg, progress);
  if (!o.loss_csv.empty()) write_text(o.loss_csv, format_loss_csv(report));
  std::printf("trained %zu iterations in %.1f s, checkpoint %s\n", report.loss.size(), report.wall_seconds,
              o.out.string().c_str());
}

// ---- eval ----

struct EvalOpts {
  fs::path model;
  fs::path data;
  fs::path out;
  int size = 0;
  unsigned threads = 1;
  InputWindow window;
};

void run_eval(const EvalOpts& o) {
  const auto raw = cli::read_slices(o.data);
  const int size = o.size > 0 ? o.size : raw.front().ct.width();
  std::vector<LabeledSlice> data;
  for (const auto& s : raw) data.push_back(resize_to(s, size));
  const auto model = models::load_model(o.model, size);
  const EvaluationResult r = evaluate(*model, data, o.window, o.threads);
  write_text(o.out, r.csv);
  const EvalSummary& s = r.summary;
  std::cout << s.n << " slices: TPR " << fmt_metric(s.mean_tpr, "%") << ", TNR " << fmt_metric(s.mean_tnr, "%")
            << ", DSC " << fmt_metric(s.mean_dsc, "%") << ", HD " << fmt_metric(s.mean_hd, " px")
            << (s.skipped ? ", " + std::to_string(s.skipped) + " with undefined metrics" : "") << "\n";
}

// ---- overlay ----

struct OverlayOpts {
  fs::path ct;
  fs::path mask;
  fs::path model;
  fs::path pred;
  fs::path out;
  InputWindow window;
};

void run_overlay(const OverlayOpts& o) {
  if (!o.model.empty() && !o.pred.empty()) throw ValidationError("overlay: give --model or --pred, not both");
  const ScalarImage2D ct = read_image(o.ct);
  const BinaryMask2D gt = read_pgm_mask(o.mask);
  std::optional<BinaryMask2D> pred;
  if (!o.model.empty()) {
    if (ct.width() != ct.height()) throw ValidationError("overlay: model prediction needs a square slice");
    const auto model = models::load_model(o.model, ct.width());
    pred = model->predict(normalize_window(ct, o.window.lo, o.window.hi));
  } else if (!o.pred.empty()) {
    pred = read_pgm_mask(o.pred);
  }
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  write_ppm(render_overlay(ct, gt, pred), o.out);
}

// ---- gradcheck ----

struct GradcheckOpts {
  std::string arch = "all";
  std::uint64_t seed = 1;
  int base_channels = 2;
};

int run_gradcheck(const GradcheckOpts& o) {
  double worst = 0.0;
  bool unresolved = false;
  const auto row = [&](const std::string& name, std::size_t coords, double err) {
    std::printf("%-36s %8zu  %.3e\n", name.c_str(), coords, err);
    worst = std::max(worst, err);
  };
  std::printf("%-36s %8s  %s\n", "layer", "coords", "max_rel_error");
  for (const auto& e : check_layer_gradients(o.seed)) row(e.name, e.coords, e.result.max_rel_error);

  std::vector<std::unique_ptr<models::SegmentationModel>> models;
  // Smallest valid inputs: 16x16 for atrous-mini, 32x32 for FCN-mini.
  if (o.arch != "atrous") models.push_back(models::build_fcn_mini({32, o.base_channels, 2}, o.seed));
  if (o.arch != "fcn") models.push_back(models::build_atrous_mini({16, o.base_channels, 2, 2, {2, 4}}, o.seed));
  for (const auto& m : models) {
    const ModelCheckReport r = check_model_gradients(*m, o.seed);
    for (const auto& e : r.layers) {
      row(e.name == "input" ? m->arch() + ".input" : e.name, e.coords, e.result.max_rel_error);
    }
    if (r.unresolved > 0) {
      std::fprintf(stderr, "%s: %zu coordinates sit on kinks at every step\n", m->arch().c_str(), r.unresolved);
      unresolved = true;
    }
  }
  std::printf("max relative error %.3e (limit %.0e)\n", worst, kGradTolerance);
  return worst <= kGradTolerance && !unresolved ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised CT bladder segmentation pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Flat `key = value` file of flag values (flag names without dashes); flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<FlatConfig>(&app));
  app.get_formatter()->column_width(40);

  int status = 0;

  PhantomOpts ph;
  auto* phantom = app.add_subcommand("phantom", "Write synthetic CT/PET patients and a manifest");
  phantom->add_option("--out", ph.out, "Output directory")->required();
  phantom->add_option("--patients", ph.spec.n_patients, "Number of patients")->capture_default_str()->check(CLI::PositiveNumber);
  phantom->add_option("--slices", ph.spec.slices_per_patient, "Slices per patient")->capture_default_str()->check(CLI::PositiveNumber);
  phantom->add_option("--size", ph.spec.image_size, "Slice width and height")->capture_default_str()->check(CLI::Range(8, 4096));
  phantom->add_option("--seed", ph.spec.seed, "Random seed")->capture_default_str();
  phantom->add_option("--semi-axis-min", ph.spec.semi_axis_min, "Smallest ellipse semi-axis, pixels")->capture_default_str();
  phantom->add_option("--semi-axis-max", ph.spec.semi_axis_max, "Largest ellipse semi-axis, pixels")->capture_default_str();
  phantom->add_option("--pet-bg", ph.spec.pet_bg_intensity, "PET background activity")->capture_default_str();
  phantom->add_option("--ct-noise", ph.spec.ct_noise_sigma, "CT noise sigma")->capture_default_str();
  phantom->callback([&] { run_phantom(ph); });

  PrepareOpts pr;
  auto* prepare = app.add_subcommand("prepare", "Weak labels from PET, slice selection and patient split");
  prepare->add_option("--manifest", pr.manifest, "patient_id,ct_path,pet_path lines")->required();
  prepare->add_option("--out", pr.out, "Output directory (train/, test/, split.csv)")->required();
  prepare->add_option("--fraction", pr.fraction, "Threshold as a fraction of the PET volume maximum")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  prepare->add_option("--train-patients", pr.train_patients, "Patients assigned to training")->capture_default_str()->check(CLI::PositiveNumber);
  prepare->add_option("--seed", pr.seed, "Split seed")->capture_default_str();
  prepare->add_option("--min-fg", pr.min_fg, "Minimum foreground pixels for a slice to be kept")->capture_default_str();
  prepare->callback([&] { run_prepare(pr); });

  AugmentOpts au;
  auto* augment = app.add_subcommand("augment", "Rotation, scaling and noise augmentation of a slice directory");
  augment->add_option("--data", au.data, "Input slice directory (ct/, mask/)")->required();
  augment->add_option("--out", au.out, "Output slice directory")->required();
  augment->add_option("--max-rotation-deg,--max_rotation_deg", au.plan.max_rotation_deg, "Largest rotation, degrees")->capture_default_str()->check(CLI::Range(0.0, 180.0));
  augment->add_option("--n-rotations,--n_rotations", au.plan.n_rotations, "Number of rotations")->capture_default_str()->check(CLI::Range(1, 10));
  augment->add_option("--max-scale,--max_scale", au.plan.max_scale, "Largest relative scaling")->capture_default_str()->check(CLI::Range(0.05, 0.15));
  augment->add_option("--n-scales-x,--n_scales_x", au.plan.n_scales_x, "Number of x scalings")->capture_default_str()->check(CLI::Range(0, 5));
  augment->add_option("--n-scales-y,--n_scales_y", au.plan.n_scales_y, "Number of y scalings")->capture_default_str()->check(CLI::Range(0, 5));
  augment->add_option("--n-noisy,--n_noisy", au.plan.n_noisy, "Number of noise levels")->capture_default_str()->check(CLI::Range(1, 10));
  augment->add_option("--gaussian-max-sigma,--gaussian_max_sigma", au.plan.gaussian_max_sigma, "Largest Gaussian sigma")->capture_default_str()->check(CLI::Range(1.0, 10.0));
  augment->add_option("--uniform-max-amp,--uniform_max_amp", au.plan.uniform_max_amp, "Largest uniform amplitude")->capture_default_str()->check(CLI::Range(1.0, 10.0));
  augment->add_option("--saltpepper-max-density,--saltpepper_max_density", au.plan.saltpepper_max_density, "Largest salt-and-pepper density")
      ->capture_default_str()->check(CLI::Range(0.05, 0.5));
  augment->add_option("--noise-kind,--noise_kind", au.noise, "Noise kind")->capture_default_str()
      ->check(CLI::IsMember({"none", "gaussian", "uniform", "salt_pepper"}));
  augment->add_option("--seed", au.plan.seed, "Noise seed")->capture_default_str();
  augment->add_option("--threads", au.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
  augment->callback([&] { run_augment(au); });

  TrainOpts tr;
  auto* trainc = app.add_subcommand("train", "Train FCN-mini or atrous-mini with Adam, batch size 1");
  trainc->add_option("--data", tr.data, "Training slice directory")->required();
  trainc->add_option("--out", tr.out, "Checkpoint path")->required();
  trainc->add_option("--arch", tr.arch, "Architecture")->capture_default_str()->check(CLI::IsMember({"fcn", "atrous"}));
  trainc->add_option("--size", tr.size, "Network input size; slices are resampled")->capture_default_str()
      ->check(CLI::IsMember({64, 128, 256, 512}));
  trainc->add_option("--base-channels", tr.base_channels, "Channels of the first stage")->capture_default_str()->check(CLI::Range(1, 256));
  trainc->add_option("--blocks-per-stage", tr.blocks_per_stage, "Residual blocks per stage (atrous)")->capture_default_str()->check(CLI::Range(1, 16));
  trainc->add_option("--iterations", tr.cfg.iterations, "Training iterations")->capture_default_str()->check(CLI::PositiveNumber);
  trainc->add_option("--lr", tr.cfg.lr, "Adam learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
  trainc->add_option("--seed", tr.cfg.seed, "Shuffle seed")->capture_default_str();
  trainc->add_option("--model-seed", tr.cfg.model_seed, "Weight initialization seed")->capture_default_str();
  trainc->add_option("--checkpoint-every", tr.cfg.checkpoint_every, "Intermediate checkpoint interval, 0 for none")->capture_default_str();
  trainc->add_option("--loss-csv", tr.loss_csv, "Write iteration,loss lines here");
  trainc->add_option("--log-every", tr.log_every, "Progress interval on stderr, 0 for silence")->capture_default_str();
  add_window(trainc, tr.cfg.window);
  trainc->callback([&] { run_train(tr); });

  EvalOpts ev;
  auto* evalc = app.add_subcommand("eval", "Per-slice TPR, TNR, DSC and Hausdorff distance as CSV");
  evalc->add_option("--model", ev.model, "Checkpoint")->required();
  evalc->add_option("--data", ev.data, "Test slice directory")->required();
  evalc->add_option("--out", ev.out, "Report CSV path")->required();
  evalc->add_option("--size", ev.size, "Network input size, 0 for the slice size")->capture_default_str()->check(CLI::NonNegativeNumber);
  evalc->add_option("--threads", ev.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
  add_window(evalc, ev.window);
  evalc->callback([&] { run_eval(ev); });

  OverlayOpts ov;
  auto* overlay = app.add_subcommand("overlay", "Render a CT slice with the ground-truth contour and a prediction");
  overlay->add_option("--ct", ov.ct, "CT slice (.mhd)")->required();
  overlay->add_option("--mask", ov.mask, "Ground-truth mask (.pgm)")->required();
  overlay->add_option("--model", ov.model, "Checkpoint to predict with");
  overlay->add_option("--pred", ov.pred, "Prediction mask (.pgm)");
  overlay->add_option("--out", ov.out, "Output image (.ppm)")->required();
  add_window(overlay, ov.window);
  overlay->callback([&] { run_overlay(ov); });

  GradcheckOpts gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every layer and both models");
  gradcheck->add_option("--arch", gc.arch, "Models to check")->capture_default_str()->check(CLI::IsMember({"all", "fcn", "atrous"}));
  gradcheck->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  gradcheck->add_option("--base-channels", gc.base_channels, "Channels of the first stage")->capture_default_str()->check(CLI::Range(1, 8));
  gradcheck->callback([&] { status = run_gradcheck(gc); });

  for (auto* sub : app.get_subcommands({})) {
    sub->footer("Flags may also come from --config FILE (key = value lines, keys are flag names without dashes).");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ConfigError& e) {
    std::string what = e.what();
    const std::string prefix = "INI was not able to parse ";
    if (what.rfind(prefix, 0) == 0) {
      what = what.substr(prefix.size());
      what = "unknown config key " + what.substr(what.find('.') + 1);
    }
    std::cerr << "error: " << what << "\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return status;
}
