#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sasr/audio.hpp"
#include "sasr/backend_http.hpp"
#include "sasr/boundary.hpp"
#include "sasr/cache.hpp"
#include "sasr/common.hpp"
#include "sasr/dataprep.hpp"
#include "sasr/io.hpp"
#include "sasr/metrics.hpp"
#include "sasr/orchestrator.hpp"
#include "sasr/synth.hpp"
#include "sasr/timeline.hpp"

namespace sasr {

/// Knobs shared across subcommands, echoed into every report.
struct GlobalConfig {
  double tau = kDefaultTau;
  double alpha = kDefaultAlpha;
  int top_k = kDefaultTopK;
  double bin_width = kDefaultBinWidth;
  double collar = 0.0;
  double window = 50.0;
  int max_turns = 64;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool json = false;
};

namespace cli_detail {

inline ordered_json config_to_json(const GlobalConfig& g) {
  return ordered_json{{"tau", g.tau},         {"alpha", g.alpha},
                      {"k", g.top_k},         {"bin_width", g.bin_width},
                      {"collar", g.collar},   {"window", g.window},
                      {"max_turns", g.max_turns}, {"seed", g.seed},
                      {"jobs", g.jobs}};
}

template <typename F>
void parallel_for(int jobs, int count, F&& body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::pair<int, int> parse_speaker_range(const std::string& text) {
  auto dash = text.find('-');
  if (dash == std::string::npos) {
    int v = std::stoi(text);
    return {v, v};
  }
  return {std::stoi(text.substr(0, dash)), std::stoi(text.substr(dash + 1))};
}

inline const SessionAnnotation* find_session(const std::vector<SessionAnnotation>& sessions,
                                             const std::string& wanted) {
  if (wanted.empty()) return sessions.size() == 1 ? &sessions.front() : nullptr;
  for (const SessionAnnotation& s : sessions)
    if (s.session_id == wanted) return &s;
  return nullptr;
}

inline SessionAnnotation transcript_as_session(const std::string& session_id,
                                               std::vector<Segment> segments) {
  SessionAnnotation ann;
  ann.session_id = session_id;
  ann.segments = std::move(segments);
  sort_segments(ann.segments);
  ann.speaker_genders = majority_genders(ann.segments);
  for (const Segment& seg : ann.segments) ann.duration = std::max(ann.duration, seg.interval.end);
  return ann;
}

inline void print_session_row(const MetricsReport& r) {
  std::printf("%-18s der %6.4f (miss %5.4f fa %5.4f conf %5.4f)  cer %6.4f  cpcer %6.4f  "
              "dcp %+7.4f  acc %5.3f  sca %d\n",
              r.session_id.c_str(), r.der.der, r.der.miss, r.der.false_alarm, r.der.confusion,
              r.cer.rate(), r.cp.rate, r.delta_cp(), r.attributes.acc(),
              r.attributes.count_correct ? 1 : 0);
}

}  // namespace cli_detail

/// Entry point behind main(); takes argv[1:]. Exit codes: 0 success,
/// 1 runtime failure, 2 usage.
inline int run_cli(std::vector<std::string> args) {
  GlobalConfig g;
  CLI::App app{"speaker-attributed transcription harness"};
  app.require_subcommand(1);
  app.set_config("--config")->configurable(false);
  app.add_option("--tau", g.tau, "observation merge threshold")->capture_default_str();
  app.add_option("--alpha", g.alpha, "cache recency weight")->capture_default_str();
  app.add_option("--k", g.top_k, "cache entries per speaker")->capture_default_str();
  app.add_option("--bin-width", g.bin_width, "boundary bin width, seconds")->capture_default_str();
  app.add_option("--collar", g.collar, "DER collar, seconds")->capture_default_str();
  app.add_option("--window", g.window, "max observation window / chunk length, seconds")
      ->capture_default_str();
  app.add_option("--max-turns", g.max_turns, "turn budget per window")->capture_default_str();
  app.add_option("--seed", g.seed, "root random seed")->capture_default_str();
  app.add_option("--jobs", g.jobs, "session-level parallelism")->capture_default_str();
  app.add_flag("--json", g.json, "machine-readable output");

  // --- synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate synthetic sessions");
  std::string synth_speakers = "2-8", synth_out;
  int synth_sessions = 1;
  SynthConfig synth_cfg;
  bool synth_rttm = false, synth_no_audio = false;
  synth->add_option("--speakers", synth_speakers, "count or range, e.g. 4 or 2-8")
      ->capture_default_str();
  synth->add_option("--duration", synth_cfg.duration, "seconds")->capture_default_str();
  synth->add_option("--overlap", synth_cfg.overlap_prob, "overlap probability")
      ->capture_default_str();
  synth->add_option("--backchannel", synth_cfg.backchannel_prob, "backchannel probability")
      ->capture_default_str();
  synth->add_option("--mean-utterance", synth_cfg.mean_utterance)->capture_default_str();
  synth->add_option("--utterance-spread", synth_cfg.utterance_spread)->capture_default_str();
  synth->add_option("--p-male", synth_cfg.p_male)->capture_default_str();
  synth->add_option("--p-female", synth_cfg.p_female)->capture_default_str();
  synth->add_option("--sessions", synth_sessions, "number of sessions")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_flag("--rttm", synth_rttm, "also emit per-session RTTM");
  synth->add_flag("--no-audio", synth_no_audio, "skip WAV rendering");

  // --- segment ---------------------------------------------------------------
  auto* segment = app.add_subcommand("segment", "long-form chunking boundaries");
  std::string seg_audio, seg_vad;
  double seg_min = 40.0, seg_max = 50.0;
  segment->add_option("--audio", seg_audio, "WAV file")->required();
  segment->add_option("--vad", seg_vad, "VAD boundary file (start end per line)");
  segment->add_option("--min", seg_min, "min chunk length")->capture_default_str();
  segment->add_option("--max", seg_max, "max chunk length")->capture_default_str();

  // --- observe ---------------------------------------------------------------
  auto* observe = app.add_subcommand("observe", "dump observation structure");
  std::string obs_in, obs_out;
  observe->add_option("--in", obs_in, "annotation JSONL")->required();
  observe->add_option("--out", obs_out, "output JSONL (default stdout)");

  // --- cache-select ----------------------------------------------------------
  auto* cache_cmd = app.add_subcommand("cache-select", "speaker-aware cache selection");
  std::string cache_in, cache_out, cache_speakers, cache_session;
  cache_cmd->add_option("--in", cache_in, "decoded transcript JSONL (observation buffer source)")
      ->required();
  cache_cmd->add_option("--session", cache_session, "session id (default: the only one)");
  cache_cmd->add_option("--speakers", cache_speakers, "comma list, default all");
  cache_cmd->add_option("--out", cache_out, "output JSONL (default stdout)");

  // --- prep ------------------------------------------------------------------
  auto* prep = app.add_subcommand("prep", "emit training examples");
  std::string prep_in, prep_out;
  int prep_stage = 1;
  prep->add_option("--stage", prep_stage, "1, 2 or 3")->required();
  prep->add_option("--in", prep_in, "annotation JSONL")->required();
  prep->add_option("--out", prep_out, "training JSONL")->required();

  // --- run -------------------------------------------------------------------
  auto* run = app.add_subcommand("run", "multi-turn inference over one session");
  std::string run_audio, run_backend = "oracle", run_ref, run_session_id, run_out, run_turn_log,
              run_vad, run_meta;
  bool run_long = false, run_audio_bytes = false, run_no_cache = false, run_strict = false;
  CorruptionConfig run_corruption;
  run->add_option("--audio", run_audio, "WAV file")->required();
  run->add_option("--backend", run_backend, "oracle | http://host:port")->capture_default_str();
  run->add_option("--ref", run_ref, "ground-truth JSONL (oracle backend)");
  run->add_option("--session", run_session_id, "session id within --ref");
  run->add_option("--out", run_out, "hypothesis JSONL")->required();
  run->add_option("--turn-log", run_turn_log, "audit log JSONL");
  run->add_option("--meta", run_meta, "run metadata JSON (summary counts, status)");
  run->add_option("--vad", run_vad, "VAD boundary file for chunking");
  run->add_flag("--long-form", run_long, "chunk + cache across the whole recording");
  run->add_flag("--no-cache", run_no_cache, "disable the speaker-aware cache");
  run->add_flag("--strict", run_strict, "abort on a failed chunk");
  run->add_flag("--audio-bytes", run_audio_bytes, "inline base64 audio in prompts");
  run->add_option("--label-swap-prob", run_corruption.label_swap_prob)->capture_default_str();
  run->add_option("--jitter", run_corruption.timestamp_jitter)->capture_default_str();
  run->add_option("--char-error-prob", run_corruption.char_error_prob)->capture_default_str();
  run->add_option("--count-error-prob", run_corruption.speaker_count_error_prob)
      ->capture_default_str();

  // --- eval ------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "score hypothesis against reference");
  std::string eval_ref, eval_hyp, eval_report, eval_counts;
  double eval_step = 0.01;
  eval->add_option("--ref", eval_ref, "reference JSONL or RTTM")->required();
  eval->add_option("--hyp", eval_hyp, "hypothesis JSONL or RTTM")->required();
  eval->add_option("--step", eval_step, "DER frame step, seconds")->capture_default_str();
  eval->add_option("--report", eval_report, "write full JSON report");
  eval->add_option("--counts", eval_counts, "run metadata JSON with summary speaker counts");

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    // ----- synth -----
    if (synth->parsed()) {
      auto [lo, hi] = cli_detail::parse_speaker_range(synth_speakers);
      std::filesystem::create_directories(synth_out);
      std::vector<SessionAnnotation> sessions(static_cast<std::size_t>(synth_sessions));
      cli_detail::parallel_for(g.jobs, synth_sessions, [&](int i) {
        SynthConfig cfg = synth_cfg;
        cfg.min_speakers = lo;
        cfg.max_speakers = hi;
        cfg.seed = g.seed + static_cast<std::uint64_t>(i);
        cfg.render_audio = !synth_no_audio;
        SynthResult result = generate_session(cfg);
        if (!synth_no_audio)
          write_wav_mono16(synth_out + "/" + result.annotation.session_id + ".wav",
                           result.audio.samples, result.audio.sample_rate);
        if (synth_rttm) {
          std::ofstream rttm(synth_out + "/" + result.annotation.session_id + ".rttm");
          write_rttm(rttm, result.annotation);
        }
        sessions[static_cast<std::size_t>(i)] = std::move(result.annotation);
      });
      write_transcript_jsonl(synth_out + "/sessions.jsonl", sessions);
      if (g.json) {
        ordered_json j{{"sessions", synth_sessions}, {"out", synth_out}};
        j["config"] = cli_detail::config_to_json(g);
        std::cout << j.dump() << "\n";
      } else {
        std::printf("wrote %d session(s) to %s\n", synth_sessions, synth_out.c_str());
      }
      return 0;
    }

    // ----- segment -----
    if (segment->parsed()) {
      AudioBuffer audio = load_wav_mono(seg_audio);
      std::optional<std::vector<TimeInterval>> vad;
      if (!seg_vad.empty()) vad = read_vad_intervals(seg_vad);
      std::vector<TimeInterval> chunks = segment_long_form(audio, vad, seg_min, seg_max);
      if (g.json) {
        ordered_json j = ordered_json::array();
        for (const TimeInterval& c : chunks) j.push_back({c.start, c.end});
        std::cout << j.dump() << "\n";
      } else {
        for (const TimeInterval& c : chunks)
          std::cout << format_time(c.start) << " " << format_time(c.end) << "\n";
      }
      return 0;
    }

    // ----- observe -----
    if (observe->parsed()) {
      std::ofstream file;
      if (!obs_out.empty()) file.open(obs_out);
      std::ostream& out = obs_out.empty() ? std::cout : file;
      for (const SessionAnnotation& ann : read_transcript_jsonl(obs_in))
        for (const Observation& obs : build_observations(ann.segments, g.tau))
          out << observation_to_json(ann.session_id, obs, ann.segments).dump() << "\n";
      return 0;
    }

    // ----- cache-select -----
    if (cache_cmd->parsed()) {
      std::vector<SessionAnnotation> sessions = read_transcript_jsonl(cache_in);
      const SessionAnnotation* ann = cli_detail::find_session(sessions, cache_session);
      if (!ann)
        throw Error(ErrorCode::config_error,
                    cache_session.empty() ? "need --session with multi-session input"
                                          : "no session " + cache_session);
      ObservationBuffer buffer;
      for (const Observation& obs : build_observations(ann->segments, g.tau))
        buffer.items.push_back({obs.interval, obs.members, ann->audio_ref});
      std::set<SpeakerLabel> wanted;
      if (cache_speakers.empty()) {
        for (const Segment& seg : ann->segments) wanted.insert(seg.speaker);
      } else {
        std::istringstream ss(cache_speakers);
        std::string token;
        while (std::getline(ss, token, ',')) wanted.insert(SpeakerLabel{std::stoi(token)});
      }
      std::ofstream file;
      if (!cache_out.empty()) file.open(cache_out);
      std::ostream& out = cache_out.empty() ? std::cout : file;
      for (const auto& [speaker, entries] : select_cache(buffer, wanted, g.alpha, g.top_k))
        for (const CacheEntry& e : entries) out << cache_entry_to_json(e).dump() << "\n";
      return 0;
    }

    // ----- prep -----
    if (prep->parsed()) {
      std::vector<SessionAnnotation> sessions = read_transcript_jsonl(prep_in);
      std::ofstream out(prep_out);
      if (!out) throw Error(ErrorCode::file_missing, "cannot open for write: " + prep_out);
      DataPrepConfig cfg{g.tau, g.bin_width};
      long long count = 0;
      for (std::size_t i = 0; i < sessions.size(); ++i) {
        std::mt19937_64 rng(mix_seed(g.seed, i));
        for (const TrainingExample& ex :
             emit_stage_examples(sessions[i], prep_stage, cfg, rng)) {
          out << training_example_to_json(ex).dump() << "\n";
          ++count;
        }
      }
      if (!g.json) std::printf("stage %d: %lld example(s) from %zu session(s)\n", prep_stage,
                               count, sessions.size());
      return 0;
    }

    // ----- run -----
    if (run->parsed()) {
      AudioBuffer audio = load_wav_mono(run_audio);
      std::unique_ptr<ModelBackend> backend;
      std::string session_id = run_session_id;
      if (run_backend == "oracle") {
        if (run_ref.empty())
          throw Error(ErrorCode::config_error, "--backend oracle needs --ref ground truth");
        std::vector<SessionAnnotation> refs = read_transcript_jsonl(run_ref);
        const SessionAnnotation* truth = cli_detail::find_session(refs, run_session_id);
        if (!truth)
          throw Error(ErrorCode::config_error,
                      run_session_id.empty() ? "need --session with multi-session --ref"
                                             : "no session " + run_session_id);
        session_id = truth->session_id;
        SessionAnnotation adjusted = *truth;
        adjusted.duration = std::max(adjusted.duration, audio.duration());
        backend = std::make_unique<OracleBackend>(std::move(adjusted), g.tau, run_corruption,
                                                  g.seed);
      } else if (run_backend.rfind("http", 0) == 0) {
        backend = std::make_unique<HttpBackend>(run_backend, run_audio_bytes);
        if (session_id.empty())
          session_id = std::filesystem::path(run_audio).stem().string();
      } else {
        throw Error(ErrorCode::config_error, "unknown backend: " + run_backend);
      }

      OrchestratorConfig ocfg;
      ocfg.tau = g.tau;
      ocfg.alpha = g.alpha;
      ocfg.top_k = g.top_k;
      ocfg.bin_width = g.bin_width;
      ocfg.window = g.window;
      ocfg.chunk_min = std::min(40.0, g.window * 0.8);
      ocfg.max_turns = g.max_turns;
      ocfg.use_cache = !run_no_cache;
      ocfg.strict_chunks = run_strict;

      std::optional<std::vector<TimeInterval>> vad;
      if (!run_vad.empty()) vad = read_vad_intervals(run_vad);

      std::vector<Segment> transcript;
      std::vector<InteractionTurn> turn_log;
      std::string status = "ok";
      std::optional<int> summary_count;
      int chunk_count = 1;
      if (run_long) {
        LongFormResult result = run_long_form(audio, *backend, ocfg, vad);
        transcript = std::move(result.transcript);
        chunk_count = static_cast<int>(result.chunks.size());
        status = result.all_ok ? "ok" : "partial";
        for (ChunkRun& chunk : result.chunks)
          for (InteractionTurn& turn : chunk.result.turns)
            turn_log.push_back(std::move(turn));
      } else {
        SessionResult result = run_session(audio, *backend, ocfg);
        transcript = std::move(result.transcript);
        status = to_string(result.status);
        if (result.summary) summary_count = result.summary->speaker_count;
        turn_log = std::move(result.turns);
      }

      SessionAnnotation hyp = cli_detail::transcript_as_session(session_id, std::move(transcript));
      write_transcript_jsonl(run_out, {hyp});
      if (!run_turn_log.empty()) {
        std::ofstream log(run_turn_log);
        for (const InteractionTurn& turn : turn_log) log << turn_to_json(turn).dump() << "\n";
      }
      if (!run_meta.empty()) {
        ordered_json meta;
        meta[session_id] = {{"status", status},
                            {"turns", static_cast<int>(turn_log.size())},
                            {"chunks", chunk_count}};
        if (summary_count) meta[session_id]["speaker_count"] = *summary_count;
        meta[session_id]["config"] = cli_detail::config_to_json(g);
        std::ofstream mf(run_meta);
        mf << meta.dump(2) << "\n";
      }
      if (g.json) {
        ordered_json j{{"session_id", session_id},
                       {"status", status},
                       {"segments", hyp.segments.size()},
                       {"turns", turn_log.size()}};
        std::cout << j.dump() << "\n";
      } else {
        std::printf("%s: %zu segment(s), %zu turn(s), status %s\n", session_id.c_str(),
                    hyp.segments.size(), turn_log.size(), status.c_str());
      }
      return status == "ok" ? 0 : 1;
    }

    // ----- eval -----
    if (eval->parsed()) {
      auto is_rttm = [](const std::string& p) {
        return p.size() > 5 && p.substr(p.size() - 5) == ".rttm";
      };
      const bool der_only = is_rttm(eval_ref) || is_rttm(eval_hyp);
      std::vector<SessionAnnotation> refs =
          is_rttm(eval_ref) ? read_rttm(eval_ref) : read_transcript_jsonl(eval_ref);
      std::vector<SessionAnnotation> hyps =
          is_rttm(eval_hyp) ? read_rttm(eval_hyp) : read_transcript_jsonl(eval_hyp);
      std::map<std::string, const SessionAnnotation*> hyp_by_id;
      for (const SessionAnnotation& h : hyps) hyp_by_id[h.session_id] = &h;
      std::vector<std::string> missing;
      for (const SessionAnnotation& r : refs)
        if (!hyp_by_id.count(r.session_id)) missing.push_back(r.session_id);
      if (!missing.empty()) {
        std::string names;
        for (const std::string& id : missing) names += (names.empty() ? "" : ", ") + id;
        throw Error(ErrorCode::config_error, "hypothesis missing session(s): " + names);
      }

      std::map<std::string, int> summary_counts;
      if (!eval_counts.empty()) {
        std::ifstream in(eval_counts);
        if (!in) throw Error(ErrorCode::file_missing, eval_counts);
        nlohmann::json meta = nlohmann::json::parse(in);
        for (auto& [id, entry] : meta.items())
          if (entry.contains("speaker_count")) summary_counts[id] = entry["speaker_count"];
      }

      EvalConfig ecfg{g.collar, eval_step};
      const int n = static_cast<int>(refs.size());
      std::vector<MetricsReport> reports(static_cast<std::size_t>(n));
      std::vector<DerResult> der_reports(static_cast<std::size_t>(n));
      cli_detail::parallel_for(g.jobs, n, [&](int i) {
        const SessionAnnotation& ref = refs[static_cast<std::size_t>(i)];
        const SessionAnnotation& hyp = *hyp_by_id.at(ref.session_id);
        if (der_only) {
          der_reports[static_cast<std::size_t>(i)] =
              der(ref.segments, hyp.segments, ecfg.collar, ecfg.step);
        } else {
          std::optional<int> count;
          auto it = summary_counts.find(ref.session_id);
          if (it != summary_counts.end()) count = it->second;
          reports[static_cast<std::size_t>(i)] =
              evaluate_session(ref, hyp.segments, ecfg, count);
        }
      });

      ordered_json report_json;
      report_json["config"] = cli_detail::config_to_json(g);
      report_json["config"]["step"] = eval_step;
      report_json["der_only"] = der_only;
      if (der_only) {
        double ref_time = 0, miss_t = 0, fa_t = 0, conf_t = 0;
        report_json["sessions"] = ordered_json::array();
        for (int i = 0; i < n; ++i) {
          const DerResult& d = der_reports[static_cast<std::size_t>(i)];
          ref_time += d.ref_speech_time;
          miss_t += d.miss_time;
          fa_t += d.false_alarm_time;
          conf_t += d.confusion_time;
          report_json["sessions"].push_back({{"session_id", refs[static_cast<std::size_t>(i)].session_id},
                                             {"der", d.der},
                                             {"miss", d.miss},
                                             {"false_alarm", d.false_alarm},
                                             {"confusion", d.confusion}});
          if (!g.json)
            std::printf("%-18s der %6.4f (miss %5.4f fa %5.4f conf %5.4f)\n",
                        refs[static_cast<std::size_t>(i)].session_id.c_str(), d.der, d.miss,
                        d.false_alarm, d.confusion);
        }
        ordered_json agg{{"sessions", n},
                         {"der", (miss_t + fa_t + conf_t) / ref_time},
                         {"miss", miss_t / ref_time},
                         {"false_alarm", fa_t / ref_time},
                         {"confusion", conf_t / ref_time}};
        report_json["aggregate"] = agg;
        if (g.json)
          std::cout << report_json.dump() << "\n";
        else
          std::printf("aggregate (%d sessions): der %6.4f\n", n,
                      agg["der"].get<double>());
      } else {
        report_json["sessions"] = ordered_json::array();
        for (const MetricsReport& r : reports) {
          report_json["sessions"].push_back(metrics_to_json(r));
          if (!g.json) cli_detail::print_session_row(r);
        }
        AggregateReport agg = aggregate_reports(reports);
        report_json["aggregate"] = aggregate_to_json(agg);
        if (g.json)
          std::cout << report_json.dump() << "\n";
        else
          std::printf(
              "aggregate (%d sessions): der %6.4f  cer %6.4f  cpcer %6.4f  dcp %+7.4f  "
              "acc %5.3f  sca %5.3f\n",
              agg.sessions, agg.der, agg.cer, agg.cpcer, agg.delta_cp, agg.acc, agg.sca);
      }
      if (!eval_report.empty()) {
        std::ofstream out(eval_report);
        if (!out) throw Error(ErrorCode::file_missing, "cannot open for write: " + eval_report);
        out << report_json.dump(2) << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace sasr
