#pragma once

// Object vocabulary: the closed set of (color, category) pairs scenes may
// draw from, plus the size dimension and the portable-goods group used by
// preference tasks.

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clarify {

enum class Category {
  basket, bowl, cup, casserole, cushion, dumbbell, jug,
  towel, hat, plate, shoe, toy, vase, teapot,
};
inline constexpr int kCategoryCount = 14;

enum class Color {
  white, green, brown, red, black, yellow, blue, orange, grey, pink,
};
inline constexpr int kColorCount = 10;

enum class Size { small, large };

inline std::string_view to_string(Category c) {
  static constexpr std::array<std::string_view, kCategoryCount> names = {
      "basket", "bowl", "cup", "casserole", "cushion", "dumbbell", "jug",
      "towel", "hat", "plate", "shoe", "toy", "vase", "teapot"};
  return names[static_cast<int>(c)];
}

inline std::string_view to_string(Color c) {
  static constexpr std::array<std::string_view, kColorCount> names = {
      "white", "green", "brown", "red", "black",
      "yellow", "blue", "orange", "grey", "pink"};
  return names[static_cast<int>(c)];
}

inline std::string_view to_string(Size s) {
  return s == Size::small ? "small" : "large";
}

inline std::optional<Category> category_from_string(std::string_view s) {
  for (int i = 0; i < kCategoryCount; ++i) {
    if (to_string(static_cast<Category>(i)) == s) {
      return static_cast<Category>(i);
    }
  }
  // Plural surface form, e.g. "cups" in clutter questions.
  if (s.size() > 1 && s.back() == 's') {
    return category_from_string(s.substr(0, s.size() - 1));
  }
  return std::nullopt;
}

inline std::optional<Color> color_from_string(std::string_view s) {
  for (int i = 0; i < kColorCount; ++i) {
    if (to_string(static_cast<Color>(i)) == s) return static_cast<Color>(i);
  }
  return std::nullopt;
}

inline std::optional<Size> size_from_string(std::string_view s) {
  if (s == "small") return Size::small;
  if (s == "large") return Size::large;
  return std::nullopt;
}

inline std::string plural(Category c) { return std::string(to_string(c)) + "s"; }

struct VocabEntry {
  Color color;
  Category category;
};

// The closed list of allowed colored-object types. Generated scenes never
// step outside it.
inline const std::vector<VocabEntry>& vocabulary() {
  static const std::vector<VocabEntry> table = {
      {Color::white, Category::basket},    {Color::green, Category::basket},
      {Color::brown, Category::basket},    {Color::white, Category::bowl},
      {Color::red, Category::bowl},        {Color::green, Category::bowl},
      {Color::red, Category::cup},         {Color::green, Category::cup},
      {Color::white, Category::cup},       {Color::white, Category::casserole},
      {Color::green, Category::casserole}, {Color::black, Category::casserole},
      {Color::green, Category::cushion},   {Color::yellow, Category::cushion},
      {Color::blue, Category::cushion},    {Color::yellow, Category::dumbbell},
      {Color::green, Category::dumbbell},  {Color::blue, Category::dumbbell},
      {Color::blue, Category::jug},        {Color::orange, Category::jug},
      {Color::white, Category::jug},       {Color::blue, Category::towel},
      {Color::red, Category::towel},       {Color::green, Category::towel},
      {Color::grey, Category::hat},        {Color::yellow, Category::hat},
      {Color::white, Category::plate},     {Color::green, Category::plate},
      {Color::pink, Category::plate},      {Color::black, Category::shoe},
      {Color::blue, Category::shoe},       {Color::orange, Category::shoe},
      {Color::grey, Category::toy},        {Color::blue, Category::toy},
      {Color::black, Category::toy},       {Color::red, Category::vase},
      {Color::blue, Category::vase},       {Color::pink, Category::vase},
      {Color::black, Category::teapot},    {Color::white, Category::teapot},
      {Color::yellow, Category::teapot},
  };
  return table;
}

inline std::vector<Color> colors_of(Category c) {
  std::vector<Color> out;
  for (const auto& e : vocabulary()) {
    if (e.category == c) out.push_back(e.color);
  }
  return out;
}

inline bool in_vocabulary(Color color, Category category) {
  for (const auto& e : vocabulary()) {
    if (e.color == color && e.category == category) return true;
  }
  return false;
}

// Categories treated as portable kitchen goods by preference tasks.
inline const std::vector<Category>& utensil_group() {
  static const std::vector<Category> group = {
      Category::cup, Category::bowl, Category::plate,
      Category::teapot, Category::jug, Category::casserole};
  return group;
}

inline bool is_utensil(Category c) {
  for (Category g : utensil_group()) {
    if (g == c) return true;
  }
  return false;
}

}  // namespace clarify
