#include "oir/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <thread>

#include "oir/error.hpp"
#include "oir/prosody.hpp"

namespace oir::pipeline {

namespace {

std::vector<const corpus::Segment*> pointers(const corpus::Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<const corpus::Segment*> out;
  for (std::size_t i : idx) out.push_back(&ds.segments()[i]);
  return out;
}

// Prosodic vectors for the targets of one dialogue.
std::vector<std::pair<std::size_t, FeatureVector>> dialogue_prosody(const corpus::Dataset& ds,
                                                                    audio::AudioSource& audio,
                                                                    const std::vector<std::size_t>& members,
                                                                    const std::set<std::size_t>& wanted) {
  const auto& segs = ds.segments();
  std::map<std::size_t, prosody::SegmentAnalysis> analyses;
  auto analysis = [&](std::size_t i) -> const prosody::SegmentAnalysis& {
    auto it = analyses.find(i);
    if (it == analyses.end()) {
      const auto& s = segs[i];
      const auto buf = audio.segment(s.audio_ref.path, s.audio_ref.channel, s.t_start, s.t_end);
      it = analyses.emplace(i, prosody::analyze_segment(s, buf)).first;
    }
    return it->second;
  };
  // Every segment contributes to the speaker baselines.
  for (std::size_t i : members) analysis(i);

  std::vector<std::pair<std::size_t, FeatureVector>> out;
  for (std::size_t i : members) {
    if (!wanted.count(i)) continue;
    const auto& seg = segs[i];
    prosody::ProsodyContext ctx;
    const auto prior = corpus::prior_other_turn(ds, i);
    const auto following = corpus::following_other_turn(ds, i);
    if (!prior.empty()) {
      ctx.prev = &analysis(prior.back());
      ctx.latency_prev = seg.t_start - segs[prior.back()].t_end;
      ctx.repeated_words = linguistic::repeated_tokens(seg, pointers(ds, prior));
    }
    if (!following.empty()) {
      ctx.next = &analysis(following.front());
      ctx.latency_next = segs[following.front()].t_start - seg.t_end;
    }
    for (std::size_t j : members) {
      if (j != i && segs[j].t_end <= seg.t_start) ctx.history.push_back(analysis(j).summary);
    }
    out.emplace_back(i, prosody::extract_prosodic(seg, analysis(i), ctx).reordered(prosody::prosodic_feature_names()));
  }
  return out;
}

}  // namespace

FeatureTable extract_prosody_table(const corpus::Dataset& ds, audio::AudioSource& audio,
                                   const std::vector<std::size_t>& targets, int threads) {
  const std::set<std::size_t> wanted(targets.begin(), targets.end());
  std::vector<std::string> dialogues;
  for (const auto& d : ds.dialogue_ids()) {
    for (std::size_t i : ds.dialogue_indices(d)) {
      if (wanted.count(i)) {
        dialogues.push_back(d);
        break;
      }
    }
  }

  std::vector<std::vector<std::pair<std::size_t, FeatureVector>>> results(dialogues.size());
  std::vector<std::optional<Error>> failures(dialogues.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < dialogues.size(); k = next++) {
      try {
        results[k] = dialogue_prosody(ds, audio, ds.dialogue_indices(dialogues[k]), wanted);
      } catch (const Error& e) {
        failures[k] = e;
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n, dialogues.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures) {
    if (f) throw *f;
  }

  std::map<std::size_t, const FeatureVector*> by_index;
  for (const auto& r : results) {
    for (const auto& [i, fv] : r) by_index[i] = &fv;
  }
  FeatureTable table;
  table.columns = prosody::prosodic_feature_names();
  for (std::size_t i : targets) table.add_row(ds.segments()[i].segment_id, *by_index.at(i));
  return table;
}

FeatureTable extract_linguistic_table(const corpus::Dataset& ds, const linguistic::BigramVocabulary& vocab,
                                      const std::vector<std::size_t>& targets) {
  FeatureTable table;
  table.columns = linguistic::linguistic_feature_names(vocab);
  for (std::size_t i : targets) table.add_row(ds.segments()[i].segment_id, linguistic::extract_linguistic(ds, i, vocab));
  return table;
}

void impute_speaker_baseline(FeatureTable& table, const corpus::Dataset& ds) {
  // Rows grouped by (dialogue, speaker) in temporal order.
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<double, std::size_t>>> groups;
  for (std::size_t r = 0; r < table.ids.size(); ++r) {
    const corpus::Segment* s = ds.find(table.ids[r]);
    if (!s) throw Error(Errc::DataError, "feature row " + table.ids[r] + " has no segment in the corpus");
    groups[{s->dialogue_id, s->speaker}].emplace_back(s->t_start, r);
  }
  const std::size_t nc = table.columns.size();
  for (auto& [key, rows] : groups) {
    std::sort(rows.begin(), rows.end());
    std::vector<double> sum(nc, 0.0);
    std::vector<std::size_t> count(nc, 0);
    for (const auto& [t, r] : rows) {
      for (std::size_t c = 0; c < nc; ++c) {
        if (!table.present[r][c] && std::isnan(table.values[r][c]) && count[c] > 0) {
          table.values[r][c] = sum[c] / static_cast<double>(count[c]);
        }
      }
      for (std::size_t c = 0; c < nc; ++c) {
        if (table.present[r][c]) {
          sum[c] += table.values[r][c];
          ++count[c];
        }
      }
    }
  }
}

}  // namespace oir::pipeline
