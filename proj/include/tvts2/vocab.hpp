/*
 * Copyright (c) 2026 The TVTS2 Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace tvts2 {

// Fixed word-level vocabulary. Index 0/1/2 are reserved for <pad>, <unk>,
// <eos>; everything else is a plain lowercase word.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(int id) const;
  int id(const std::string& word) const;  // kUnk for misses

  const std::vector<std::string>& words() const { return words_; }

  // Lowercase, split on whitespace, map, append EOS, pad/truncate to
  // context_len. Truncation keeps the leading words and always ends in EOS.
  std::vector<int> encode(const std::string& text, int context_len) const;

  std::vector<int> encode_words(const std::vector<std::string>& words,
                                int context_len) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

std::string lowercased(const std::string& s);
std::vector<std::string> whitespace_split(const std::string& s);

}  // namespace tvts2
