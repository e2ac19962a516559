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

#include "tvts2/vocab.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "tvts2/common.hpp"

namespace tvts2 {

std::string lowercased(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> whitespace_split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.size() < 3 || words_[0] != "<pad>" || words_[1] != "<unk>" || words_[2] != "<eos>")
    throw ValidationError("vocab: first three entries must be <pad>, <unk>, <eos>");
  for (size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty()) throw ValidationError("vocab: empty entry at line " + std::to_string(i + 1));
    auto [it, fresh] = index_.emplace(words_[i], static_cast<int>(i));
    (void)it;
    if (!fresh) throw ValidationError("vocab: duplicate entry '" + words_[i] + "'");
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("vocab: cannot open " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    words.push_back(line);
  }
  return Vocabulary(std::move(words));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("vocab: cannot write " + path);
  for (const auto& w : words_) out << w << "\n";
  if (!out) throw IoError("vocab: write failed for " + path);
}

const std::string& Vocabulary::word(int i) const {
  if (i < 0 || i >= size()) throw IndexError("vocab: id out of range");
  return words_[static_cast<size_t>(i)];
}

int Vocabulary::id(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text, int context_len) const {
  return encode_words(whitespace_split(lowercased(text)), context_len);
}

std::vector<int> Vocabulary::encode_words(const std::vector<std::string>& ws,
                                          int context_len) const {
  if (context_len < 1) throw ConfigError("vocab: context length must be at least 1");
  std::vector<int> ids;
  ids.reserve(static_cast<size_t>(context_len));
  for (const auto& w : ws) {
    if (static_cast<int>(ids.size()) == context_len - 1) break;
    ids.push_back(id(lowercased(w)));
  }
  ids.push_back(kEos);
  while (static_cast<int>(ids.size()) < context_len) ids.push_back(kPad);
  return ids;
}

}  // namespace tvts2
