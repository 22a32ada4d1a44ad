#pragma once

namespace dilemma {

inline constexpr const char* kToolVersion = "0.1.0";

// Bumped whenever any prompt template text changes. Results produced under
// different template versions must never be compared.
inline constexpr const char* kTemplateVersion = "mm-templates-v1";

// Bumped whenever the conjoint dummy coding changes. Alignment scores are
// comparable only within one coding version.
inline constexpr const char* kAmceCodingVersion = "amce-coding-v1";

// Line-record schema version shared by corpus and record files.
inline constexpr int kSchemaVersion = 1;

}  // namespace dilemma
