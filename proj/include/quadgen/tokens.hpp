#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace quadgen {

using TokenSeq = std::vector<std::string>;

namespace tok {
inline constexpr std::string_view kOpenList = "[";
inline constexpr std::string_view kCloseList = "]";
inline constexpr std::string_view kOpenQuad = "⟨";   // ⟨
inline constexpr std::string_view kCloseQuad = "⟩";  // ⟩
inline constexpr std::string_view kImplicit = "null";
inline constexpr std::string_view kBos = "⟨bos⟩";
inline constexpr std::string_view kEos = "⟨eos⟩";
inline constexpr std::string_view kSeparator = "|";

inline constexpr std::array<std::string_view, 8> kReserved = {
    kOpenList, kCloseList, kOpenQuad, kCloseQuad, kImplicit, kBos, kEos, kSeparator};
}  // namespace tok

inline bool is_reserved_token(std::string_view t) {
  return std::find(tok::kReserved.begin(), tok::kReserved.end(), t) != tok::kReserved.end();
}

/// Structure indicators and boundary markers, i.e. reserved tokens other than "null".
inline bool is_structural_token(std::string_view t) {
  return is_reserved_token(t) && t != tok::kImplicit;
}

inline bool has_upper(std::string_view t) {
  return std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isupper(c) != 0; });
}

inline bool has_lower(std::string_view t) {
  return std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::islower(c) != 0; });
}

/// A token that may appear inside an aspect or opinion span: no reserved token, no uppercase.
inline bool is_span_token(std::string_view t) {
  return !t.empty() && !is_reserved_token(t) && !has_upper(t);
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline TokenSeq split_whitespace(std::string_view line) {
  TokenSeq out;
  std::istringstream in{std::string(line)};
  std::string t;
  while (in >> t) out.push_back(std::move(t));
  return out;
}

inline std::string join(const TokenSeq& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

}  // namespace quadgen
