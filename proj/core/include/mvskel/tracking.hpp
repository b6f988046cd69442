#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mvskel/skeleton.hpp"

namespace mvskel {

enum class TrackStatus { Active, Closed };

struct TrackEntry {
    std::int64_t time_index = 0;
    Skeleton3D skeleton;
};

struct Track {
    int id = 0;
    std::vector<TrackEntry> entries;  // strictly increasing time_index
    TrackStatus status = TrackStatus::Active;

    std::int64_t last_time() const;
    const Skeleton3D& last_skeleton() const;
    std::size_t length() const { return entries.size(); }
};

struct TrackerConfig {
    double distance_threshold = 0.5;  // metres, match iff strictly below
    int min_track_length = 10;        // shorter tracks dropped at finalize
    int max_persons = 2;              // longest tracks kept at finalize
    int max_gap = 30;                 // frames a track stays matchable unobserved

    void validate() const;
};

/// Mean Euclidean distance over joints valid (confidence > 0) in both
/// skeletons; +infinity when no joint is valid in both. Throws on layout
/// mismatch.
double skeleton_distance(const Skeleton3D& a, const Skeleton3D& b);

/// One tracking step: greedy globally-smallest-distance matching between
/// active tracks' last entries and the detections, threshold cfg.distance_threshold
/// (exclusive); unmatched detections open new tracks (ids count up from the
/// largest existing id); active tracks idle for more than cfg.max_gap frames
/// are closed. Throws if t does not exceed every existing entry's time index.
void assign_frame(std::vector<Track>& tracks, const std::vector<Skeleton3D>& detections,
                  std::int64_t t, const TrackerConfig& cfg);

/// Post-processing: (1) drop tracks shorter than cfg.min_track_length;
/// (2) repeatedly merge the temporally non-overlapping pair with the smallest
/// gap (ties: lower id pair), merged track keeps the lower id; (3) keep the
/// cfg.max_persons longest (ties: lower id), reassigned ids 0..k-1 in order of
/// first appearance.
std::vector<Track> finalize_tracks(std::vector<Track> tracks, const TrackerConfig& cfg);

/// Convenience: run assign_frame over every frame of a world-frame multi-person
/// detection stream and finalize. detections[i] are the skeletons at times[i].
std::vector<Track> track_sequence(const std::vector<std::int64_t>& times,
                                  const std::vector<std::vector<Skeleton3D>>& detections,
                                  const TrackerConfig& cfg);

/// Tracks rendered as a skeleton sequence with stable person ids; frames with
/// no observations are omitted.
SkeletonSequence tracks_to_sequence(const std::vector<Track>& tracks);

}  // namespace mvskel
