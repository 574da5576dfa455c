#include "lava/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lava/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lava {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

Waveform normalize_peak(const Waveform& w) {
  float peak = 0;
  for (float v : w.samples) peak = std::max(peak, std::abs(v));
  Waveform out = w;
  if (peak == 0) {
    out.silence = true;
    return out;
  }
  for (float& v : out.samples) v /= peak;
  return out;
}

Waveform fit_length(const Waveform& w, int64_t n) {
  if (w.rate != kTargetRate)
    throw ValidationError("fit_length expects rate " + std::to_string(kTargetRate) + ", got " +
                          std::to_string(w.rate));
  Waveform out = w;
  out.samples.resize(static_cast<size_t>(n), 0.0f);
  return out;
}

Waveform preprocess(Waveform w) {
  return fit_length(normalize_peak(resample(std::move(w), kTargetRate)));
}

Waveform preprocess(const std::string& path) { return preprocess(load_wav(path)); }

Tensor crop_front(const Tensor& w, int64_t n) {
  if (n <= 0 || n >= w.numel()) return w;
  Tensor out(std::vector<int64_t>{n});
  std::copy(w.data(), w.data() + n, out.data());
  return out;
}

namespace {

const char* kManifestFields[] = {"path", "technology", "model", "authenticity", "split"};

[[noreturn]] void manifest_fail(const std::string& path, size_t line, const std::string& field,
                                const std::string& what) {
  throw ValidationError(path + ":" + std::to_string(line) + ": field '" + field + "' " + what);
}

std::optional<std::string> optional_string(const json& j, const std::string& path, size_t line,
                                           const char* field) {
  if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
  if (!j.at(field).is_string()) manifest_fail(path, line, field, "must be a string or null");
  return j.at(field).get<std::string>();
}

bool is_one_of(const std::string& v, const std::vector<std::string>& allowed) {
  return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object()) manifest_fail(path, lineno, "<line>", "must be a JSON object");

    ManifestEntry e;
    if (!j.contains("path") || !j.at("path").is_string())
      manifest_fail(path, lineno, "path", "is required and must be a string");
    e.path = j.at("path").get<std::string>();

    if (!j.contains("authenticity") || !j.at("authenticity").is_string())
      manifest_fail(path, lineno, "authenticity", "is required and must be a string");
    e.authenticity = j.at("authenticity").get<std::string>();
    if (e.authenticity != "real" && e.authenticity != "fake")
      manifest_fail(path, lineno, "authenticity", "must be 'real' or 'fake'");

    if (!j.contains("split") || !j.at("split").is_string())
      manifest_fail(path, lineno, "split", "is required and must be a string");
    e.split = j.at("split").get<std::string>();
    if (e.split != "train" && e.split != "val" && e.split != "test")
      manifest_fail(path, lineno, "split", "must be 'train', 'val', or 'test'");

    e.technology = optional_string(j, path, lineno, "technology");
    if (e.technology && !is_one_of(*e.technology, kTechnologies))
      manifest_fail(path, lineno, "technology", "must be one of ASV, FoR, Codec");

    e.model = optional_string(j, path, lineno, "model");
    if (e.model && !is_one_of(*e.model, kModels))
      manifest_fail(path, lineno, "model", "must be one of F01..F06");

    if (e.model && (!e.technology || *e.technology != "Codec"))
      manifest_fail(path, lineno, "model", "requires technology Codec");
    if (e.authenticity == "real" && (e.technology || e.model))
      manifest_fail(path, lineno, "authenticity", "real entries must not carry labels");

    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest " + path + " for writing");
  for (const auto& e : entries) {
    json j;
    j["path"] = e.path;
    j["technology"] = e.technology ? json(*e.technology) : json(nullptr);
    j["model"] = e.model ? json(*e.model) : json(nullptr);
    j["authenticity"] = e.authenticity;
    j["split"] = e.split;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed for manifest " + path);
}

std::string resolve_path(const std::string& manifest_path, const std::string& entry_path) {
  fs::path p(entry_path);
  if (p.is_absolute()) return entry_path;
  return (fs::path(manifest_path).parent_path() / p).string();
}

std::map<std::string, ClassRecipe> SynthSpec::default_recipes() {
  // technologies differ in bandwidth and comb pitch; the six codec models
  // share the codec bandwidth and differ in quantizer resolution and comb
  // pitch; "unseen" is a codec-style recipe absent from training
  return {
      {"real", {0, 0, 0, 1e-4}},
      {"ASV", {7000, 0, 160, 3e-3}},
      {"FoR", {5000, 0, 220, 2e-3}},
      {"F01", {3000, 256, 250, 1e-3}},
      {"F02", {3000, 64, 290, 1e-3}},
      {"F03", {3000, 32, 330, 1e-3}},
      {"F04", {3000, 16, 370, 1e-3}},
      {"F05", {3000, 12, 410, 1e-3}},
      {"F06", {3000, 8, 450, 1e-3}},
      {"unseen", {3000, 20, 520, 1e-3}},
  };
}

SynthSpec desk_synth_spec(const std::string& out_dir, uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.out_dir = out_dir;
  spec.counts["ASV"] = {300, 100, 100};
  spec.counts["FoR"] = {300, 100, 100};
  // the Codec technology quota (300/100/100) split over the six models
  for (size_t m = 0; m < kModels.size(); ++m) {
    const int n = static_cast<int>(kModels.size());
    auto share = [&](int total) { return total / n + (static_cast<int>(m) < total % n ? 1 : 0); };
    spec.counts[kModels[m]] = {share(300), share(100), share(100)};
  }
  spec.counts["real"] = {0, 0, 100};
  spec.counts["unseen"] = {0, 0, 100};
  return spec;
}

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

constexpr double kCombGain = 0.6;
constexpr double kEnvelopeDepth = 0.3;
constexpr double kSynthPeak = 0.9;

}  // namespace

Waveform synth_sample(const SynthSpec& spec, const std::string& class_name, int64_t index) {
  auto it = spec.recipes.find(class_name);
  if (it == spec.recipes.end())
    throw ValidationError("no recipe for synth class '" + class_name + "'");
  const ClassRecipe& recipe = it->second;
  Rng rng(derive_seed(derive_seed(spec.seed, fnv1a(class_name)), static_cast<uint64_t>(index)));

  const int64_t n = spec.length;
  const double rate = spec.rate;
  const double f0 = rng.uniform(120.0, 380.0);
  const double max_freq =
      recipe.bandlimit_hz > 0 ? std::min(recipe.bandlimit_hz, 0.475 * rate) : 0.475 * rate;
  const int harmonics = std::clamp(static_cast<int>(max_freq / f0), 1, 48);

  // per-harmonic phasors make the harmonic sum a few multiplies per sample
  std::vector<std::complex<double>> phasor(static_cast<size_t>(harmonics));
  std::vector<std::complex<double>> step(static_cast<size_t>(harmonics));
  std::vector<double> amp(static_cast<size_t>(harmonics));
  for (int h = 0; h < harmonics; ++h) {
    amp[static_cast<size_t>(h)] = rng.uniform(0.3, 1.0) / (h + 1);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double omega = 2.0 * kPi * f0 * (h + 1) / rate;
    phasor[static_cast<size_t>(h)] = std::polar(1.0, phase);
    step[static_cast<size_t>(h)] = std::polar(1.0, omega);
  }
  const double env_freq = rng.uniform(0.5, 2.0);
  const double env_phase = rng.uniform(0.0, 2.0 * kPi);

  std::vector<double> x(static_cast<size_t>(n));
  for (int64_t t = 0; t < n; ++t) {
    double s = 0;
    for (int h = 0; h < harmonics; ++h) {
      s += amp[static_cast<size_t>(h)] * phasor[static_cast<size_t>(h)].imag();
      phasor[static_cast<size_t>(h)] *= step[static_cast<size_t>(h)];
    }
    const double env = 1.0 + kEnvelopeDepth * std::sin(2.0 * kPi * env_freq * t / rate + env_phase);
    x[static_cast<size_t>(t)] = env * s;
  }

  if (recipe.comb_hz > 0) {
    const int64_t delay = std::max<int64_t>(1, std::llround(rate / recipe.comb_hz));
    for (int64_t t = delay; t < n; ++t)
      x[static_cast<size_t>(t)] += kCombGain * x[static_cast<size_t>(t - delay)];
  }

  if (recipe.noise_amp > 0)
    for (int64_t t = 0; t < n; ++t)
      x[static_cast<size_t>(t)] += recipe.noise_amp * rng.uniform(-1.0, 1.0);

  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0)
    for (double& v : x) v *= kSynthPeak / peak;

  // quantization stays last so a class with L levels emits at most L
  // distinct amplitudes
  if (recipe.quant_levels > 0) {
    const double L = recipe.quant_levels;
    const double lo = -L / 2, hi = L / 2 - 1;
    for (double& v : x) {
      const double k = std::clamp(std::floor(v * L / 2.0), lo, hi);
      v = (k + 0.5) * (2.0 / L);
    }
  }

  Waveform w;
  w.rate = spec.rate;
  w.samples.resize(static_cast<size_t>(n));
  for (int64_t t = 0; t < n; ++t)
    w.samples[static_cast<size_t>(t)] = static_cast<float>(x[static_cast<size_t>(t)]);
  return w;
}

std::vector<ManifestEntry> synth_corpus(const SynthSpec& spec) {
  std::error_code ec;
  fs::create_directories(spec.out_dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + spec.out_dir + ": " + ec.message());

  std::vector<ManifestEntry> manifest;
  std::vector<ManifestEntry> generalization;
  char name[64];
  for (const auto& [cls, counts] : spec.counts) {
    int64_t index = 0;
    for (const auto& [split, count] :
         {std::pair<const char*, int>{"train", counts.train}, {"val", counts.val},
          {"test", counts.test}}) {
      for (int i = 0; i < count; ++i, ++index) {
        const Waveform w = synth_sample(spec, cls, index);
        std::snprintf(name, sizeof(name), "%s_%05lld.wav", cls.c_str(),
                      static_cast<long long>(index));
        write_wav_pcm16((fs::path(spec.out_dir) / name).string(), w);

        ManifestEntry e;
        e.path = name;
        e.split = split;
        if (cls == "real") {
          e.authenticity = "real";
        } else {
          e.authenticity = "fake";
          if (cls == "unseen") {
            // source withheld from training; carries no labels
          } else if (is_one_of(cls, kModels)) {
            e.technology = "Codec";
            e.model = cls;
          } else {
            e.technology = cls;
          }
        }
        (cls == "unseen" ? generalization : manifest).push_back(std::move(e));
      }
    }
  }
  write_manifest(manifest, (fs::path(spec.out_dir) / "manifest.jsonl").string());
  write_manifest(generalization, (fs::path(spec.out_dir) / "generalization.jsonl").string());
  return manifest;
}

}  // namespace lava
