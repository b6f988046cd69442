#include "mvskel/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace mvskel {

std::int64_t Track::last_time() const {
    if (entries.empty()) throw std::logic_error("Track::last_time: empty track");
    return entries.back().time_index;
}

const Skeleton3D& Track::last_skeleton() const {
    if (entries.empty()) throw std::logic_error("Track::last_skeleton: empty track");
    return entries.back().skeleton;
}

void TrackerConfig::validate() const {
    if (!(distance_threshold > 0.0))
        throw std::invalid_argument("TrackerConfig: distance_threshold <= 0");
    if (min_track_length <= 0) throw std::invalid_argument("TrackerConfig: min_track_length <= 0");
    if (max_persons <= 0) throw std::invalid_argument("TrackerConfig: max_persons <= 0");
    if (max_gap <= 0) throw std::invalid_argument("TrackerConfig: max_gap <= 0");
}

double skeleton_distance(const Skeleton3D& a, const Skeleton3D& b) {
    if (!a.layout || !b.layout || a.layout->name != b.layout->name)
        throw std::invalid_argument("skeleton_distance: layout mismatch");
    if (a.joints.size() != b.joints.size())
        throw std::invalid_argument("skeleton_distance: joint count mismatch");
    double sum = 0.0;
    int shared = 0;
    for (std::size_t i = 0; i < a.joints.size(); ++i) {
        if (a.joints[i].c <= 0.0 || b.joints[i].c <= 0.0) continue;
        sum += (a.joints[i].pos() - b.joints[i].pos()).norm();
        ++shared;
    }
    if (shared == 0) return std::numeric_limits<double>::infinity();
    return sum / shared;
}

void assign_frame(std::vector<Track>& tracks, const std::vector<Skeleton3D>& detections,
                  std::int64_t t, const TrackerConfig& cfg) {
    cfg.validate();
    int next_id = 0;
    for (const Track& track : tracks) {
        if (!track.entries.empty() && track.last_time() >= t)
            throw std::invalid_argument("assign_frame: non-monotonic time index");
        next_id = std::max(next_id, track.id + 1);
    }

    // Close tracks that have been idle past the gap before matching.
    for (Track& track : tracks) {
        if (track.status == TrackStatus::Active && t - track.last_time() > cfg.max_gap)
            track.status = TrackStatus::Closed;
    }

    struct Candidate {
        double distance;
        std::size_t track_pos;
        std::size_t detection;
    };
    std::vector<Candidate> candidates;
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
        if (tracks[ti].status != TrackStatus::Active) continue;
        for (std::size_t di = 0; di < detections.size(); ++di) {
            const double d = skeleton_distance(tracks[ti].last_skeleton(), detections[di]);
            if (d < cfg.distance_threshold) candidates.push_back({d, ti, di});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (tracks[a.track_pos].id != tracks[b.track_pos].id)
            return tracks[a.track_pos].id < tracks[b.track_pos].id;
        return a.detection < b.detection;
    });

    std::vector<bool> track_used(tracks.size(), false);
    std::vector<bool> detection_used(detections.size(), false);
    for (const Candidate& c : candidates) {
        if (track_used[c.track_pos] || detection_used[c.detection]) continue;
        track_used[c.track_pos] = true;
        detection_used[c.detection] = true;
        tracks[c.track_pos].entries.push_back({t, detections[c.detection]});
    }
    for (std::size_t di = 0; di < detections.size(); ++di) {
        if (detection_used[di]) continue;
        Track fresh;
        fresh.id = next_id++;
        fresh.entries.push_back({t, detections[di]});
        tracks.push_back(std::move(fresh));
    }
}

namespace {

// Gap between temporally non-overlapping tracks; negative means they overlap.
std::int64_t track_gap(const Track& a, const Track& b) {
    const Track& first = a.entries.front().time_index <= b.entries.front().time_index ? a : b;
    const Track& second = &first == &a ? b : a;
    return second.entries.front().time_index - first.entries.back().time_index;
}

}  // namespace

std::vector<Track> finalize_tracks(std::vector<Track> tracks, const TrackerConfig& cfg) {
    cfg.validate();

    std::erase_if(tracks, [&](const Track& t) {
        return t.entries.size() < static_cast<std::size_t>(cfg.min_track_length);
    });

    // Merge passes: smallest inter-track gap first, lower-id pair on ties.
    for (;;) {
        std::size_t best_a = 0;
        std::size_t best_b = 0;
        std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
        bool found = false;
        for (std::size_t i = 0; i < tracks.size(); ++i) {
            for (std::size_t j = i + 1; j < tracks.size(); ++j) {
                const std::int64_t gap = track_gap(tracks[i], tracks[j]);
                if (gap <= 0) continue;  // temporal overlap (or touching indices)
                if (gap < best_gap) {
                    best_gap = gap;
                    best_a = i;
                    best_b = j;
                    found = true;
                }
            }
        }
        if (!found) break;

        Track& keep = tracks[best_a].id <= tracks[best_b].id ? tracks[best_a] : tracks[best_b];
        Track& drop = &keep == &tracks[best_a] ? tracks[best_b] : tracks[best_a];
        keep.entries.insert(keep.entries.end(), drop.entries.begin(), drop.entries.end());
        std::sort(keep.entries.begin(), keep.entries.end(),
                  [](const TrackEntry& x, const TrackEntry& y) {
                      return x.time_index < y.time_index;
                  });
        keep.status = TrackStatus::Closed;
        tracks.erase(tracks.begin() + static_cast<std::ptrdiff_t>(&drop - tracks.data()));
    }

    std::sort(tracks.begin(), tracks.end(), [](const Track& a, const Track& b) {
        if (a.entries.size() != b.entries.size()) return a.entries.size() > b.entries.size();
        return a.id < b.id;
    });
    if (tracks.size() > static_cast<std::size_t>(cfg.max_persons))
        tracks.resize(static_cast<std::size_t>(cfg.max_persons));

    // Stable output ids in order of first appearance.
    std::sort(tracks.begin(), tracks.end(), [](const Track& a, const Track& b) {
        if (a.entries.front().time_index != b.entries.front().time_index)
            return a.entries.front().time_index < b.entries.front().time_index;
        return a.id < b.id;
    });
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        tracks[i].id = static_cast<int>(i);
        tracks[i].status = TrackStatus::Closed;
    }
    return tracks;
}

std::vector<Track> track_sequence(const std::vector<std::int64_t>& times,
                                  const std::vector<std::vector<Skeleton3D>>& detections,
                                  const TrackerConfig& cfg) {
    if (times.size() != detections.size())
        throw std::invalid_argument("track_sequence: times/detections size mismatch");
    std::vector<Track> tracks;
    for (std::size_t i = 0; i < times.size(); ++i)
        assign_frame(tracks, detections[i], times[i], cfg);
    return finalize_tracks(std::move(tracks), cfg);
}

SkeletonSequence tracks_to_sequence(const std::vector<Track>& tracks) {
    std::map<std::int64_t, std::vector<PersonEntry>> by_time;
    for (const Track& track : tracks) {
        for (const TrackEntry& entry : track.entries) {
            PersonEntry person;
            person.id = track.id;
            person.skeleton = entry.skeleton;
            by_time[entry.time_index].push_back(std::move(person));
        }
    }
    SkeletonSequence seq;
    seq.frames.reserve(by_time.size());
    for (auto& [t, persons] : by_time) {
        std::sort(persons.begin(), persons.end(),
                  [](const PersonEntry& a, const PersonEntry& b) { return *a.id < *b.id; });
        seq.frames.push_back({static_cast<int>(t), std::move(persons)});
    }
    return seq;
}

}  // namespace mvskel
