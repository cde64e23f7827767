// SPDX-License-Identifier: Apache-2.0
#include "kid/data/sample.hpp"

#include <sstream>

#include "kid/util/io.hpp"

namespace kid::data {

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw SchemaError("split: unknown value '" + std::string(s) + "'");
}

void validate_sample(const MemeSample& s, const TaskSpec& task) {
  if (s.id.empty()) throw SchemaError("id: must be non-empty");
  if (s.image.height != kImageSide || s.image.width != kImageSide) {
    throw SchemaError("image: expected 32x32, got " + std::to_string(s.image.height) + "x" +
                      std::to_string(s.image.width));
  }
  for (double v : s.image.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw SchemaError("image: pixel outside [0, 1]");
  }
  if (!task.is_multi_label() && s.labels.size() != 1) {
    throw SchemaError("label: single-label task needs exactly one label");
  }
  if (task.is_multi_label() && s.labels.empty() && !task.allow_empty) {
    throw SchemaError("label: empty label set not allowed by task '" + task.name + "'");
  }
  for (const auto& l : s.labels) (void)task.label_index(l);
}

namespace {

Image image_from_array(const nlohmann::ordered_json& j) {
  if (!j.is_array() || j.empty()) throw SchemaError("image: expected a path or an array of rows");
  Image img;
  img.height = j.size();
  img.width = j.front().is_array() ? j.front().size() : 0;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != img.width) throw SchemaError("image: ragged pixel rows");
    for (const auto& v : row) {
      if (!v.is_number()) throw SchemaError("image: non-numeric pixel");
      img.pixels.push_back(v.get<double>());
    }
  }
  return img;
}

}  // namespace

MemeSample sample_from_json(const nlohmann::ordered_json& j, const TaskSpec& task,
                            const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw SchemaError("record: expected a JSON object");
  auto need_string = [&](const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string(key) + ": missing");
    if (!j.at(key).is_string()) throw SchemaError(std::string(key) + ": expected a string");
    return j.at(key).get<std::string>();
  };
  MemeSample s;
  s.id = need_string("id");
  s.text = need_string("text");
  if (!j.contains("image")) throw SchemaError("image: missing");
  const auto& img = j.at("image");
  if (img.is_string()) {
    s.image_path = img.get<std::string>();
    const std::filesystem::path p(*s.image_path);
    s.image = read_pgm(p.is_absolute() ? p : base_dir / p);
  } else {
    s.image = image_from_array(img);
  }
  if (j.contains("aug_text") && !j.at("aug_text").is_null()) {
    if (!j.at("aug_text").is_string()) throw SchemaError("aug_text: expected a string");
    s.aug_text = j.at("aug_text").get<std::string>();
  }
  if (!j.contains("label")) throw SchemaError("label: missing");
  const auto& label = j.at("label");
  if (label.is_string()) {
    s.labels = {label.get<std::string>()};
  } else if (label.is_array()) {
    s.label_is_list = true;
    for (const auto& l : label) {
      if (!l.is_string()) throw SchemaError("label: expected strings in label list");
      s.labels.push_back(l.get<std::string>());
    }
  } else {
    throw SchemaError("label: expected a string or an array of strings");
  }
  s.split = parse_split(need_string("split"));
  for (const auto& [key, value] : j.items()) {
    if (key == "id" || key == "image" || key == "text" || key == "aug_text" || key == "label" ||
        key == "split") {
      continue;
    }
    s.extra[key] = value;
  }
  validate_sample(s, task);
  return s;
}

nlohmann::ordered_json sample_to_json(const MemeSample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  if (s.image_path) {
    j["image"] = *s.image_path;
  } else {
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < s.image.height; ++r) {
      auto row = nlohmann::ordered_json::array();
      for (std::size_t c = 0; c < s.image.width; ++c) row.push_back(s.image.at(r, c));
      rows.push_back(std::move(row));
    }
    j["image"] = std::move(rows);
  }
  j["text"] = s.text;
  if (s.aug_text) j["aug_text"] = *s.aug_text;
  if (s.label_is_list) {
    j["label"] = s.labels;
  } else {
    j["label"] = s.labels.empty() ? std::string() : s.labels.front();
  }
  j["split"] = split_name(s.split);
  for (const auto& [key, value] : s.extra.items()) j[key] = value;
  return j;
}

std::vector<MemeSample> load_jsonl(const std::filesystem::path& path, const TaskSpec& task) {
  const std::string contents = util::read_file(path);
  std::vector<MemeSample> out;
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(where + "invalid JSON: " + e.what());
    }
    try {
      out.push_back(sample_from_json(j, task, path.parent_path()));
    } catch (const SchemaError& e) {
      throw SchemaError(where + e.what());
    } catch (const util::IoError& e) {
      throw SchemaError(where + "image: " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::vector<MemeSample>& samples, const std::filesystem::path& path) {
  std::string out;
  for (const auto& s : samples) {
    out += sample_to_json(s).dump();
    out += '\n';
  }
  util::atomic_write(path, out);
}

std::vector<MemeSample> filter_split(const std::vector<MemeSample>& samples, Split split) {
  std::vector<MemeSample> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(s);
  }
  return out;
}

std::vector<double> target_vector(const MemeSample& s, const TaskSpec& task) {
  std::vector<double> t(task.n_classes(), 0.0);
  for (const auto& l : s.labels) t[task.label_index(l)] = 1.0;
  return t;
}

}  // namespace kid::data
