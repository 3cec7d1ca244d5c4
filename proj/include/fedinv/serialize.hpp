#pragma once

#include <string>

#include "fedinv/dataset.hpp"
#include "fedinv/fedavg.hpp"
#include "fedinv/models.hpp"

namespace fedinv {

// One persisted client round: the victim architecture, the client's data,
// and the observed update (with recorded step gradients when available).
// Everything the attack and diagnose commands need to replay the round.
struct ClientArtifact {
  ModelSpec spec;
  Dataset data;
  LocalUpdate update;
};

// Binary little-endian file; doubles are stored bit-exact, so a save/load
// round trip reproduces every value identically. Overwrites `path`; throws
// std::runtime_error when the file cannot be written.
void save_artifact(const std::string& path, const ClientArtifact& artifact);

// Throws FormatError on a missing file, wrong magic, truncation, trailing
// bytes, implausible counts, or internally inconsistent payloads.
ClientArtifact load_artifact(const std::string& path);

}  // namespace fedinv
