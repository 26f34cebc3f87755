#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "sse/core/rng.hpp"
#include "sse/dsp/fft.hpp"
#include "sse/dsp/mel.hpp"
#include "sse/dsp/mfcc.hpp"
#include "sse/dsp/pca.hpp"
#include "sse/dsp/resample.hpp"
#include "sse/dsp/stft.hpp"
#include "sse/dsp/wav.hpp"
#include "test_helpers.hpp"

using namespace sse;
using namespace sse::dsp;
using Catch::Approx;
using sse::testing::error_code_of;

TEST_CASE("real FFT matches a direct DFT", "[dsp][fft]") {
  Rng rng(7);
  for (std::size_t n : {4u, 8u, 64u, 512u, 2048u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    RealFft fft(n);
    std::vector<Complex> out(fft.bins());
    fft.forward(x, out);
    for (std::size_t k = 0; k < fft.bins(); ++k) {
      Complex ref = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n);
        ref += x[i] * Complex(std::cos(a), std::sin(a));
      }
      REQUIRE(std::abs(out[k] - ref) < 1e-9 * static_cast<double>(n));
    }
    std::vector<double> back(n);
    fft.inverse(out, back);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(back[i] == Approx(x[i]).margin(1e-12));
  }
}

TEST_CASE("resample_to_mono", "[dsp][resample]") {
  SECTION("same-rate input is bit-identical") {
    auto w = sse::testing::sine(440.0, 0.5, 16000);
    auto out = resample_to_mono(w, 16000);
    REQUIRE(out.sample_rate == 16000);
    REQUIRE(out.samples == w.samples);
  }
  SECTION("32 kHz to 16 kHz keeps a 440 Hz tone") {
    auto w = sse::testing::sine(440.0, 2.0, 32000);
    auto out = resample_to_mono(w, 16000);
    REQUIRE(out.sample_rate == 16000);
    REQUIRE(out.size() == 32000);
    // Full-length DFT bin spacing is 0.5 Hz.
    const double f = sse::testing::dominant_frequency(out.samples, 16000, 400.0, 480.0);
    REQUIRE(std::abs(f - 440.0) <= 0.5);
  }
  SECTION("anti-alias filter removes content above the new Nyquist") {
    auto w = sse::testing::sine(12000.0, 0.5, 32000);
    auto out = resample_to_mono(w, 16000);
    double rms = 0.0;
    for (std::size_t i = 200; i + 200 < out.size(); ++i) rms += out.samples[i] * out.samples[i];
    rms = std::sqrt(rms / static_cast<double>(out.size() - 400));
    REQUIRE(rms < 1e-3);
  }
  SECTION("non-integer ratio preserves duration within one sample") {
    auto w = sse::testing::sine(440.0, 1.3, 44100);
    auto out = resample_to_mono(w, 16000);
    REQUIRE(std::abs(out.duration() - w.duration()) <= 1.0 / 16000);
  }
  SECTION("opposite-phase stereo cancels") {
    AudioBuffer stereo;
    stereo.sample_rate = 22050;
    auto w = sse::testing::sine(300.0, 0.25, 22050);
    stereo.channels.push_back(w.samples);
    std::vector<float> neg(w.samples);
    for (auto& v : neg) v = -v;
    stereo.channels.push_back(neg);
    auto out = resample_to_mono(stereo, 16000);
    REQUIRE(std::all_of(out.samples.begin(), out.samples.end(), [](float v) { return v == 0.0f; }));
  }
  SECTION("errors") {
    Waveform empty;
    REQUIRE(error_code_of([&] { resample_to_mono(empty, 16000); }) == ErrorCode::EmptySignal);
    auto w = sse::testing::sine(440.0, 0.1, 8000);
    REQUIRE(error_code_of([&] { resample_to_mono(w, 16000); }) == ErrorCode::UnsupportedRate);
  }
}

TEST_CASE("stft", "[dsp][stft]") {
  SECTION("1 kHz tone peaks at bin 128 and matches a direct DFT") {
    auto w = sse::testing::sine(1000.0, 0.5, 16000);
    auto spec = stft(w);
    REQUIRE(spec.n_bins() == 1025);
    const auto window = hann_window(2048);
    for (std::size_t t = 0; t < spec.n_frames; ++t) {
      std::size_t arg = 0;
      for (std::size_t k = 0; k < spec.n_bins(); ++k) {
        if (spec.magnitude(t, k) > spec.magnitude(t, arg)) arg = k;
      }
      REQUIRE(arg == 128);
    }
    // Direct DFT oracle on frame 2 for a handful of bins.
    for (std::size_t k : {0u, 5u, 127u, 128u, 129u, 700u, 1024u}) {
      Complex ref = 0.0;
      for (std::size_t i = 0; i < 2048; ++i) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k * i) / 2048.0;
        ref += static_cast<double>(w.samples[2 * 1024 + i]) * window[i] * Complex(std::cos(a), std::sin(a));
      }
      REQUIRE(std::abs(spec.frame(2)[k] - ref) < 1e-8);
    }
  }
  SECTION("silence gives zero magnitudes") {
    Waveform w;
    w.samples.assign(5000, 0.0f);
    auto spec = stft(w);
    for (const auto& c : spec.bins) REQUIRE(std::abs(c) == 0.0);
  }
  SECTION("frame count for a 10 s clip") {
    // Enumerate frame start positions explicitly.
    std::size_t count = 0;
    for (std::size_t start = 0; start + 2048 <= 160000; start += 1024) ++count;
    REQUIRE(count == 155);
    Waveform w;
    w.samples.assign(160000, 0.0f);
    REQUIRE(stft(w).n_frames == count);
    REQUIRE(stft_frame_count(160000, 2048, 1024) == 155);
  }
  SECTION("short signal") {
    Waveform w;
    w.samples.assign(2047, 0.0f);
    REQUIRE(error_code_of([&] { stft(w); }) == ErrorCode::SignalTooShort);
  }
}

TEST_CASE("Hann windows at 50% overlap add to one", "[dsp][stft][cola]") {
  const std::size_t n = 2048, hop = 1024;
  const auto w = hann_window(n);
  std::vector<double> sum(n * 8, 0.0);
  for (std::size_t t = 0; t + n <= sum.size(); t += hop) {
    for (std::size_t i = 0; i < n; ++i) sum[t + i] += w[i];
  }
  for (std::size_t i = n; i < sum.size() - n; ++i) REQUIRE(std::abs(sum[i] - 1.0) <= 1e-3);
}

TEST_CASE("pure tone energy concentrates near its frequency", "[dsp][stft]") {
  for (double f : {440.0, 1000.0, 3217.0}) {
    auto w = sse::testing::sine(f, 1.0, 16000);
    auto spec = stft(w);
    const double true_bin = f * 2048.0 / 16000.0;
    for (std::size_t t = 0; t < spec.n_frames; ++t) {
      double total = 0.0, near = 0.0;
      for (std::size_t k = 0; k < spec.n_bins(); ++k) {
        const double e = std::norm(spec.frame(t)[k]);
        total += e;
        if (std::abs(static_cast<double>(k) - true_bin) <= 2.0) near += e;
      }
      REQUIRE(near >= 0.95 * total);
    }
  }
}

TEST_CASE("mel filterbank", "[dsp][mel]") {
  REQUIRE(hz_to_mel(1000.0) == Approx(999.9855371396244).epsilon(1e-12));
  REQUIRE(hz_to_mel(0.0) == 0.0);
  REQUIRE(mel_to_hz(hz_to_mel(1234.5)) == Approx(1234.5).epsilon(1e-12));

  auto fb = mel_filterbank(128, 2048, 16000, 20.0);
  REQUIRE(fb.n_mels == 128);
  REQUIRE(fb.n_bins == 1025);
  REQUIRE(fb.weights.size() == 128u * 1025u);
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    const auto row = fb.row(m);
    REQUIRE(std::accumulate(row.begin(), row.end(), 0.0) > 0.0);
    for (double v : row) REQUIRE(v >= 0.0);
  }
  for (std::size_t k = 0; k < fb.n_bins; ++k) {
    const double hz = static_cast<double>(k) * 16000.0 / 2048.0;
    if (hz <= 20.0 || hz >= 8000.0) continue;
    double total = 0.0;
    for (std::size_t m = 0; m < fb.n_mels; ++m) total += fb.weight(m, k);
    REQUIRE(total > 0.0);
  }
  // Triangles: weight rises then falls, peaking near the mel-spaced center.
  const double spacing = (hz_to_mel(8000.0) - hz_to_mel(20.0)) / 129.0;
  for (std::size_t m : {10u, 64u, 120u}) {
    const auto row = fb.row(m);
    const auto peak = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const double center_hz = mel_to_hz(hz_to_mel(20.0) + spacing * static_cast<double>(m + 1));
    REQUIRE(std::abs(static_cast<double>(peak) - center_hz * 2048.0 / 16000.0) <= 1.0);
    for (std::size_t k = 1; k <= peak; ++k) REQUIRE(row[k] >= row[k - 1]);
    for (std::size_t k = peak + 1; k < row.size(); ++k) REQUIRE(row[k] <= row[k - 1]);
  }
  REQUIRE(error_code_of([] { mel_filterbank(16, 2048, 16000, 8000.0); }) == ErrorCode::InvalidRange);
  REQUIRE(error_code_of([] { mel_filterbank(0, 2048, 16000); }) == ErrorCode::InvalidRange);
}

TEST_CASE("log_mel", "[dsp][mel]") {
  auto fb = mel_filterbank(32, 512, 16000);
  SECTION("silence maps to log(eps)") {
    Waveform w;
    w.samples.assign(2048, 0.0f);
    auto lm = log_mel(stft(w, 512, 256), fb);
    REQUIRE(lm.n_frames == stft_frame_count(2048, 512, 256));
    for (double v : lm.values) REQUIRE(v == std::log(kLogFloor));
  }
  SECTION("doubling magnitudes adds log 2") {
    Rng rng(3);
    Waveform w;
    w.samples.resize(4096);
    for (auto& s : w.samples) s = static_cast<float>(rng.uniform(-0.5, 0.5));
    auto spec = stft(w, 512, 256);
    auto doubled = spec;
    for (auto& c : doubled.bins) c *= 2.0;
    auto a = log_mel(spec, fb);
    auto b = log_mel(doubled, fb);
    // Direct recomputation of the energies as the oracle for "energy >> eps".
    for (std::size_t t = 0; t < a.n_frames; ++t) {
      for (std::size_t m = 0; m < a.n_mels; ++m) {
        double e = 0.0;
        for (std::size_t k = 0; k < fb.n_bins; ++k) e += fb.weight(m, k) * spec.magnitude(t, k);
        REQUIRE(a.at(t, m) == Approx(std::log(e + kLogFloor)).margin(1e-9));
        if (e > 1e-2) REQUIRE(std::abs(b.at(t, m) - a.at(t, m) - std::log(2.0)) < 1e-4);
      }
    }
  }
  SECTION("single-filter bank reads one bin") {
    Spectrogram spec;
    spec.fft_size = 8;
    spec.hop = 4;
    spec.n_frames = 1;
    spec.bins.assign(5, Complex(0.0, 0.0));
    spec.bins[3] = Complex(0.0, 2.5);
    MelFilterbank one;
    one.n_mels = 1;
    one.n_bins = 5;
    one.weights = {0.0, 0.0, 0.0, 1.0, 0.0};
    auto lm = log_mel(spec, one);
    REQUIRE(lm.at(0, 0) == Approx(std::log(2.5 + kLogFloor)).epsilon(1e-15));
  }
  SECTION("bin count mismatch") {
    Waveform w;
    w.samples.assign(4096, 0.0f);
    auto spec = stft(w, 1024, 512);
    REQUIRE(error_code_of([&] { log_mel(spec, fb); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("mfcc", "[dsp][mfcc]") {
  LogMelSpectrogram lm;
  lm.n_mels = 128;
  lm.n_frames = 2;
  lm.values.assign(256, -3.25);
  SECTION("constant frame has only a DC coefficient") {
    auto c = mfcc(lm, 20);
    REQUIRE(c.size() == 2);
    REQUIRE(c[0][0] == Approx(-3.25 * std::sqrt(128.0)).epsilon(1e-12));
    for (std::size_t k = 1; k < 20; ++k) REQUIRE(std::abs(c[0][k]) < 1e-12);
    REQUIRE(c[0] == c[1]);
  }
  SECTION("full coefficient set inverts") {
    Rng rng(11);
    for (auto& v : lm.values) v = rng.uniform(-10.0, 2.0);
    auto c = mfcc(lm, 128);
    for (std::size_t t = 0; t < 2; ++t) {
      auto back = idct2_orthonormal(c[t]);
      for (std::size_t i = 0; i < 128; ++i) REQUIRE(std::abs(back[i] - lm.at(t, i)) < 1e-9);
    }
  }
  SECTION("too many coefficients") {
    REQUIRE(error_code_of([&] { mfcc(lm, 129); }) == ErrorCode::InvalidRange);
  }
}

TEST_CASE("pca", "[dsp][pca]") {
  Rng rng(5);
  SECTION("points on a line") {
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 500; ++i) {
      const double t = rng.uniform(-1.0, 1.0);
      pts.push_back({t + 1e-3 * rng.normal(), 2.0 * t + 1e-3 * rng.normal()});
    }
    auto model = pca_fit(pts, 2);
    REQUIRE(model.components[0][0] == Approx(1.0 / std::sqrt(5.0)).margin(1e-2));
    REQUIRE(model.components[0][1] == Approx(2.0 / std::sqrt(5.0)).margin(1e-2));
    REQUIRE(model.explained_variance[0] >= model.explained_variance[1]);
  }
  SECTION("isotropic sample has flat spectrum") {
    std::vector<std::vector<double>> pts(10000, std::vector<double>(4));
    for (auto& p : pts) {
      for (auto& v : p) v = rng.normal();
    }
    auto model = pca_fit(pts, 4);
    const auto [lo, hi] = std::minmax_element(model.explained_variance.begin(), model.explained_variance.end());
    REQUIRE(*hi <= 1.1 * *lo);
  }
  SECTION("projection properties") {
    std::vector<std::vector<double>> pts(300, std::vector<double>(5));
    for (auto& p : pts) {
      const double a = rng.normal(), b = rng.normal();
      p = {a, 0.5 * a + b, b - a, 0.1 * rng.normal(), 3.0 * a + 0.2 * rng.normal()};
    }
    auto model = pca_fit(pts, 5);
    // Orthonormal rows with the sign convention applied.
    for (std::size_t i = 0; i < 5; ++i) {
      const auto& ci = model.components[i];
      auto amax = std::max_element(ci.begin(), ci.end(), [](double x, double y) { return std::abs(x) < std::abs(y); });
      REQUIRE(*amax > 0.0);
      for (std::size_t j = 0; j < 5; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < 5; ++d) dot += ci[d] * model.components[j][d];
        REQUIRE(dot == Approx(i == j ? 1.0 : 0.0).margin(1e-6));
      }
    }
    auto zero = pca_transform(model, model.mean);
    for (double v : zero) REQUIRE(v == 0.0);
    // Recompute the covariance of the projections.
    std::vector<std::vector<double>> proj;
    for (const auto& p : pts) proj.push_back(pca_transform(model, p));
    double max_var = 0.0, max_off = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        double c = 0.0;
        for (const auto& q : proj) c += q[i] * q[j];
        c /= static_cast<double>(proj.size() - 1);
        if (i == j) max_var = std::max(max_var, c);
        else max_off = std::max(max_off, std::abs(c));
      }
    }
    REQUIRE(max_off < 1e-6 * max_var);
    // Isometry with k = d.
    for (const auto& p : pts) {
      auto q = pca_transform(model, p);
      double a = 0.0, b = 0.0;
      for (std::size_t d = 0; d < 5; ++d) {
        a += q[d] * q[d];
        b += (p[d] - model.mean[d]) * (p[d] - model.mean[d]);
      }
      REQUIRE(std::sqrt(a) == Approx(std::sqrt(b)).margin(1e-9));
    }
    REQUIRE(error_code_of([&] { pca_transform(model, std::vector<double>(4, 0.0)); }) == ErrorCode::ShapeMismatch);
  }
  SECTION("too few samples") {
    std::vector<std::vector<double>> pts(3, std::vector<double>{1.0, 2.0, 3.0});
    REQUIRE(error_code_of([&] { pca_fit(pts, 3); }) == ErrorCode::NotEnoughData);
    PcaModel unfitted;
    REQUIRE(error_code_of([&] { pca_transform(unfitted, pts[0]); }) == ErrorCode::ModelNotFitted);
  }
}

TEST_CASE("wav io", "[dsp][wav]") {
  const auto dir = std::filesystem::temp_directory_path() / "sse_test_wav";
  std::filesystem::create_directories(dir);
  auto w = sse::testing::sine(440.0, 0.25, 16000, 0.7);

  SECTION("float round trip is exact") {
    write_wav(dir / "f.wav", w, WavEncoding::Float32);
    auto back = read_wav(dir / "f.wav");
    REQUIRE(back.sample_rate == 16000);
    REQUIRE(back.channels.size() == 1);
    REQUIRE(back.channels[0] == w.samples);
  }
  SECTION("16-bit round trip within quantization") {
    write_wav(dir / "i.wav", w);
    auto back = read_wav(dir / "i.wav");
    for (std::size_t i = 0; i < w.size(); ++i) REQUIRE(std::abs(back.channels[0][i] - w.samples[i]) < 1.0f / 16384);
    auto info = read_wav_info(dir / "i.wav");
    REQUIRE(info.frames == w.size());
    auto seg = read_wav_segment(dir / "i.wav", 1000, 500);
    REQUIRE(seg.frames() == 500);
    REQUIRE(seg.channels[0][0] == back.channels[0][1000]);
  }
  SECTION("stereo") {
    AudioBuffer st;
    st.sample_rate = 22050;
    st.channels = {w.samples, std::vector<float>(w.size(), 0.25f)};
    const auto bytes = encode_wav(st, WavEncoding::Float32);
    auto back = decode_wav(bytes);
    REQUIRE(back.channels.size() == 2);
    REQUIRE(back.channels[1][7] == 0.25f);
  }
  SECTION("malformed input") {
    auto bytes = encode_wav(w);
    bytes.resize(30);
    REQUIRE(error_code_of([&] { decode_wav(bytes); }) == ErrorCode::AudioFormatError);
    auto bad = encode_wav(w);
    bad[0] = 'X';
    REQUIRE(error_code_of([&] { decode_wav(bad); }) == ErrorCode::AudioFormatError);
  }
}
