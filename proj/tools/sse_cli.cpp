// sse: command-line driver for the similarity engine.
//
// Exit codes: 0 success, 2 usage error (bad flags, missing or unresolvable
// paths), 1 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "sse/app/config.hpp"
#include "sse/app/embed.hpp"
#include "sse/app/service.hpp"
#include "sse/core/memory.hpp"
#include "sse/eval/encoders.hpp"
#include "sse/index/index.hpp"
#include "sse/nn/model_io.hpp"
#include "sse/objective/train.hpp"
#include "sse/pipeline/catalog.hpp"
#include "sse/pipeline/synth.hpp"

#include <httplib.h>

namespace fs = std::filesystem;
using namespace sse;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> manifest, model, embeddings, index, out, log, wav, track, exclude, bind;
  std::optional<std::size_t> k, steps, batch_size, eval_every, tracks, genres, moods, max_upload;
  std::optional<double> offset, lr, min_duration, max_duration;
  std::optional<int> port;
  std::string encoder = "trained";
  std::string split;
  bool allow_mismatch = false;
};

/// Config file first, then every flag given on the command line.
app::EngineConfig resolve_config(const Flags& f) {
  app::EngineConfig c;
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw UsageError("--config: no such file " + f.config);
    c = app::load_config(f.config);
  }
  if (f.seed) c.seed = c.train.seed = *f.seed;
  if (f.manifest) c.paths.manifest = *f.manifest;
  if (f.model) c.paths.model = *f.model;
  if (f.embeddings) c.paths.embeddings = *f.embeddings;
  if (f.index) c.paths.index = *f.index;
  if (f.steps) c.train.max_steps = *f.steps;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  if (f.eval_every) c.train.eval_every = *f.eval_every;
  if (f.lr) c.train.learning_rate = *f.lr;
  if (f.bind) c.service.bind = *f.bind;
  if (f.port) c.service.port = *f.port;
  if (f.max_upload) c.service.max_upload_bytes = *f.max_upload;
  app::validate(c);
  return c;
}

/// An input path that must be set and exist when the command starts.
fs::path need_input(const fs::path& p, const std::string& flag) {
  if (p.empty()) throw UsageError("missing " + flag + " (or set it in the --config file)");
  if (!fs::exists(p)) throw UsageError(flag + ": no such file " + p.string());
  return p;
}

fs::path need_output(const fs::path& p, const std::string& flag) {
  if (p.empty()) throw UsageError("missing " + flag);
  if (p.has_parent_path() && !fs::is_directory(p.parent_path())) {
    throw UsageError(flag + ": directory " + p.parent_path().string() + " does not exist");
  }
  return p;
}

/// Writes to `path`, or to stdout when it is empty.
void emit(const std::string& text, const std::optional<std::string>& path) {
  if (!path || path->empty()) {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(*path, std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot write " + *path);
  out << text << '\n';
}

pipeline::Split split_flag(const std::string& s, pipeline::Split fallback) {
  if (s.empty()) return fallback;
  try {
    return pipeline::parse_split(s);
  } catch (const Error& e) {
    throw UsageError(std::string("--split: ") + e.what());
  }
}

int cmd_gen_corpus(const Flags& f, const app::EngineConfig& c) {
  pipeline::SynthConfig s;
  s.seed = c.seed;
  if (f.tracks) s.n_tracks = *f.tracks;
  if (f.genres) s.genres = *f.genres;
  if (f.moods) s.moods = *f.moods;
  if (f.min_duration) s.min_duration_s = *f.min_duration;
  if (f.max_duration) s.max_duration_s = *f.max_duration;
  const fs::path dir = f.out ? fs::path(*f.out) : c.paths.corpus;
  if (dir.empty()) throw UsageError("missing --out");
  const auto catalog = pipeline::generate_synthetic_corpus(s, dir);
  std::cerr << "wrote " << catalog.size() << " tracks to " << (dir / "manifest.jsonl").string() << '\n';
  return 0;
}

int cmd_ingest(const Flags&, const app::EngineConfig& c) {
  const auto catalog = pipeline::read_manifest(need_input(c.paths.manifest, "--manifest"));
  const auto issues = pipeline::validate_audio(catalog);
  std::map<std::string, std::size_t> splits;
  for (const auto& t : catalog.tracks()) ++splits[pipeline::to_string(pipeline::assign_split(t.track_id))];
  nlohmann::json problems = nlohmann::json::array();
  for (const auto& i : issues) problems.push_back({{"track_id", i.track_id}, {"message", i.message}});
  std::cout << nlohmann::json{{"tracks", catalog.size()},
                              {"genres", catalog.genres()},
                              {"moods", catalog.moods()},
                              {"splits", splits},
                              {"issues", problems}}
                   .dump(2)
            << '\n';
  return issues.empty() ? 0 : 1;
}

int cmd_train(const Flags& f, const app::EngineConfig& c) {
  const auto catalog = pipeline::read_manifest(need_input(c.paths.manifest, "--manifest"));
  const auto model_path = need_output(c.paths.model, "--model");
  const fs::path log_path = f.log ? fs::path(*f.log) : fs::path(model_path.string() + ".log.jsonl");
  std::ofstream log(log_path, std::ios::trunc);
  require(log.good(), ErrorCode::IoError, "cannot write " + log_path.string());

  pipeline::AudioStore audio(catalog);
  auto init = nn::init_encoder<float>(c.arch, c.seed);
  const auto result = objective::train(catalog, std::move(init), c.train, audio, [&](const objective::TrainRecord& r) {
    log << nlohmann::json(r).dump() << '\n' << std::flush;
    std::cerr << "step " << r.step << " loss " << r.loss.total << " val genre mAP " << r.val_genre_map << '\n';
  });
  nn::save_model(result.model, model_path);
  write_file_bytes(nn::adam_sidecar_path(model_path), nn::serialize_adam(result.optimizer));
  std::cerr << "trained " << result.steps << " steps, best step " << result.best_step << " (val genre mAP "
            << result.best_val_map << "), model " << to_hex(nn::model_fingerprint(result.model)) << '\n';
  return 0;
}

int cmd_embed(const Flags&, const app::EngineConfig& c) {
  const auto catalog = pipeline::read_manifest(need_input(c.paths.manifest, "--manifest"));
  const auto model = nn::load_model(need_input(c.paths.model, "--model"));
  const auto out = need_output(c.paths.embeddings, "--out");
  pipeline::AudioStore audio(catalog);
  const auto file = app::embed_catalog(model, catalog, c.seed, audio);
  app::save_embeddings(file, out);
  std::cerr << "embedded " << file.records.size() << " clips to " << out.string() << '\n';
  return 0;
}

int cmd_build_index(const Flags& f, const app::EngineConfig& c) {
  const auto file = app::load_embeddings(need_input(c.paths.embeddings, "--embeddings"));
  const auto out = need_output(c.paths.index, "--out");
  std::vector<pipeline::Split> splits{pipeline::Split::Train, pipeline::Split::Validation, pipeline::Split::Test};
  if (!f.split.empty() && f.split != "all") splits = {split_flag(f.split, pipeline::Split::Test)};
  const auto idx = app::index_from_embeddings(file, splits);
  index::save_index(idx, out);
  std::cerr << "indexed " << idx.size() << " clips to " << out.string() << '\n';
  return 0;
}

int cmd_eval(const Flags& f, const app::EngineConfig& c) {
  const auto catalog = pipeline::read_manifest(need_input(c.paths.manifest, "--manifest"));
  const auto split = split_flag(f.split, pipeline::Split::Test);
  pipeline::AudioStore audio(catalog);
  std::optional<nn::EncoderModel<float>> model;
  eval::ClipEncoder encoder;
  if (f.encoder == "random") {
    encoder = eval::random_encoder(c.seed);
  } else if (f.encoder == "baseline") {
    encoder = eval::fit_baseline_encoder(catalog, c.seed, audio);
  } else {
    model = nn::load_model(need_input(c.paths.model, "--model"));
    encoder = eval::model_encoder(*model, "trained");
  }
  const auto reports = eval::evaluate_encoder(encoder, catalog, split, c.seed, audio);
  emit(nlohmann::json(reports).dump(2), f.out);
  return 0;
}

int cmd_search(const Flags& f, const app::EngineConfig& c) {
  if (f.wav.has_value() == f.track.has_value()) throw UsageError("give exactly one of --wav and --track");
  const auto model = nn::load_model(need_input(c.paths.model, "--model"));
  const auto idx =
      index::load_index(need_input(c.paths.index, "--index"), nn::model_fingerprint(model), f.allow_mismatch);
  const std::size_t k = f.k.value_or(c.service.default_k);
  if (k < 1) throw UsageError("--k must be at least 1");

  dsp::Waveform query;
  if (f.wav) {
    query = dsp::resample_to_mono(dsp::read_wav(need_input(*f.wav, "--wav")), dsp::kModelSampleRate);
  } else {
    const auto catalog = pipeline::read_manifest(need_input(c.paths.manifest, "--manifest"));
    const auto& track = catalog.at(*f.track);
    query = pipeline::extract_clip(pipeline::load_track_audio(track), f.offset.value_or(0.0), model.arch.clip_samples);
  }
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : index::search_by_track(idx, model, query, k, f.exclude)) {
    results.push_back({{"rank", r.rank},
                       {"track_id", r.clip.track_id},
                       {"clip_index", r.clip.index},
                       {"offset_s", r.clip.offset_s},
                       {"distance", r.distance},
                       {"genre", r.genre},
                       {"mood", r.mood}});
  }
  emit(nlohmann::json{{"k", k}, {"results", results}}.dump(2), f.out);
  return 0;
}

int cmd_serve(const Flags&, const app::EngineConfig& c) {
  auto catalog = pipeline::read_manifest(need_input(c.paths.manifest, "--manifest"));
  auto model = nn::load_model(need_input(c.paths.model, "--model"));
  auto idx = index::load_index(need_input(c.paths.index, "--index"), nn::model_fingerprint(model));
  const app::SearchService service(std::move(catalog), std::move(model), std::move(idx), c.service);
  httplib::Server server;
  app::mount(server, service);
  std::cerr << "listening on http://" << c.service.bind << ':' << c.service.port << '\n';
  if (!server.listen(c.service.bind, c.service.port)) {
    throw Error(ErrorCode::IoError, "cannot listen on " + c.service.bind + ":" + std::to_string(c.service.port));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  retain_large_allocations();
  Flags f;
  CLI::App cli{"Query-by-example music similarity engine"};
  cli.require_subcommand(1);
  cli.add_option("--config", f.config, "JSON engine config; flags override its keys");
  cli.add_option("--seed", f.seed, "Seed for every stochastic step");

  auto* gen = cli.add_subcommand("gen-corpus", "Synthesize a labelled corpus and its manifest");
  gen->add_option("--out", f.out, "Output directory (paths.corpus)");
  gen->add_option("--tracks", f.tracks, "Number of tracks");
  gen->add_option("--genres", f.genres, "Number of genres");
  gen->add_option("--moods", f.moods, "Number of moods");
  gen->add_option("--min-duration", f.min_duration, "Shortest track in seconds");
  gen->add_option("--max-duration", f.max_duration, "Longest track in seconds");

  auto* ingest = cli.add_subcommand("ingest", "Validate a manifest against its audio");
  ingest->add_option("--manifest", f.manifest, "Catalog manifest (paths.manifest)");

  auto* train = cli.add_subcommand("train", "Train the encoder");
  train->add_option("--manifest", f.manifest, "Catalog manifest (paths.manifest)");
  train->add_option("--model", f.model, "Output model file (paths.model)");
  train->add_option("--log", f.log, "Training log, one JSON record per validation round");
  train->add_option("--steps", f.steps, "Maximum optimizer steps (train.max_steps)");
  train->add_option("--batch-size", f.batch_size, "Clips per minibatch (train.batch_size)");
  train->add_option("--eval-every", f.eval_every, "Steps between validation rounds (train.eval_every)");
  train->add_option("--lr", f.lr, "Initial learning rate (train.learning_rate)");

  auto* embed = cli.add_subcommand("embed", "Embed every clip of the catalog");
  embed->add_option("--manifest", f.manifest, "Catalog manifest (paths.manifest)");
  embed->add_option("--model", f.model, "Trained model (paths.model)");
  embed->add_option("--out", f.embeddings, "Output embeddings file (paths.embeddings)");

  auto* build = cli.add_subcommand("build-index", "Build a search index from embeddings");
  build->add_option("--embeddings", f.embeddings, "Embeddings file (paths.embeddings)");
  build->add_option("--out", f.index, "Output index file (paths.index)");
  build->add_option("--split", f.split, "Index only this split: train, validation, test or all");

  auto* evalc = cli.add_subcommand("eval", "Report genre, mood and track mAP");
  evalc->add_option("--manifest", f.manifest, "Catalog manifest (paths.manifest)");
  evalc->add_option("--model", f.model, "Trained model, for --encoder trained (paths.model)");
  evalc->add_option("--encoder", f.encoder, "trained, random or baseline")
      ->check(CLI::IsMember({"trained", "random", "baseline"}));
  evalc->add_option("--split", f.split, "Split to evaluate (default test)");
  evalc->add_option("--out", f.out, "Write the report here instead of stdout");

  auto* search = cli.add_subcommand("search", "Query the index with a catalog clip or a WAV file");
  search->add_option("--manifest", f.manifest, "Catalog manifest, for --track (paths.manifest)");
  search->add_option("--model", f.model, "Trained model (paths.model)");
  search->add_option("--index", f.index, "Index file (paths.index)");
  search->add_option("--track", f.track, "Query with a clip of this catalog track");
  search->add_option("--offset", f.offset, "Clip offset in seconds, with --track");
  search->add_option("--wav", f.wav, "Query with this WAV file (at least one clip long)");
  search->add_option("--k", f.k, "Number of results");
  search->add_option("--exclude-track", f.exclude, "Drop results from this track");
  search->add_flag("--allow-fingerprint-mismatch", f.allow_mismatch, "Query an index built by another model");
  search->add_option("--out", f.out, "Write results here instead of stdout");

  auto* serve = cli.add_subcommand("serve", "Run the HTTP search API");
  serve->add_option("--manifest", f.manifest, "Catalog manifest (paths.manifest)");
  serve->add_option("--model", f.model, "Trained model (paths.model)");
  serve->add_option("--index", f.index, "Index file (paths.index)");
  serve->add_option("--bind", f.bind, "Bind address (service.bind)");
  serve->add_option("--port", f.port, "Port (service.port)");
  serve->add_option("--max-upload", f.max_upload, "Upload limit in bytes (service.max_upload_bytes)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 2;
  }

  app::EngineConfig config;
  try {
    config = resolve_config(f);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "usage error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(f, config);
    if (ingest->parsed()) return cmd_ingest(f, config);
    if (train->parsed()) return cmd_train(f, config);
    if (embed->parsed()) return cmd_embed(f, config);
    if (build->parsed()) return cmd_build_index(f, config);
    if (evalc->parsed()) return cmd_eval(f, config);
    if (search->parsed()) return cmd_search(f, config);
    if (serve->parsed()) return cmd_serve(f, config);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
