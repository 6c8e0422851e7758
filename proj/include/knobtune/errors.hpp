// Copyright 2026 The knobtune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace knobtune {

/// Malformed input document. `locus` is "line N" or a JSON field path.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string locus, const std::string& what)
      : std::runtime_error(locus + ": " + what), locus_(std::move(locus)) {}
  const std::string& locus() const noexcept { return locus_; }

 private:
  std::string locus_;
};

/// A well-formed document that breaks a domain rule.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string knob, std::string rule)
      : std::runtime_error("knob '" + knob + "': " + rule),
        knob_(std::move(knob)),
        rule_(std::move(rule)) {}
  const std::string& knob() const noexcept { return knob_; }
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string knob_;
  std::string rule_;
};

/// The evaluator process could not be started at all. Distinct from a crash
/// outcome, which is an ordinary observation.
class SpawnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Session-level failure (bad configuration, unusable baseline, ...).
class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace knobtune
