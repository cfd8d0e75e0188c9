#include "vla/sim/io.hpp"

#include <cstring>
#include <fstream>

#include "vla/errors.hpp"

namespace vla::sim {

using nlohmann::json;

namespace {

constexpr char kBlobMagic[8] = {'V', 'L', 'A', 'I', 'M', 'G', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError(path.string() + ": truncated image blob");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

json world_to_json(const WorldState& w) {
  json objects = json::array();
  for (const auto& o : w.objects) {
    objects.push_back({{"class_id", o.class_id}, {"x", o.pos.x}, {"y", o.pos.y}, {"radius", o.radius}});
  }
  return {{"q", w.joints.q},
          {"objects", std::move(objects)},
          {"base", {w.arm.base.x, w.arm.base.y}},
          {"links", w.arm.links},
          {"exited", w.exited}};
}

WorldState world_from_json(const json& doc) {
  try {
    WorldState w;
    w.joints.q = doc.at("q").get<std::vector<double>>();
    const auto base = doc.at("base").get<std::vector<double>>();
    if (base.size() != 2) throw IoError("scene base must have two coordinates");
    w.arm.base = {base[0], base[1]};
    w.arm.links = doc.at("links").get<std::vector<double>>();
    if (w.arm.links.size() != w.joints.size()) throw IoError("scene joints and links disagree");
    for (const auto& o : doc.at("objects")) {
      w.objects.push_back({o.at("class_id").get<int>(), {o.at("x").get<double>(), o.at("y").get<double>()},
                           o.at("radius").get<double>()});
    }
    w.exited = doc.value("exited", false);
    return w;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed scene: ") + e.what());
  }
}

json task_to_json(const Task& t) {
  return {{"name", t.name},
          {"target_class", t.target_class},
          {"kind", t.kind == TaskKind::Push ? "push" : "circle"},
          {"direction", t.direction},
          {"distance", t.distance},
          {"min_subtended", t.min_subtended}};
}

Task task_from_json(const json& doc) {
  try {
    Task t = make_task(doc.at("target_class").get<int>(), doc.at("name").get<std::string>());
    t.direction = doc.value("direction", t.direction);
    t.distance = doc.value("distance", t.distance);
    t.min_subtended = doc.value("min_subtended", t.min_subtended);
    return t;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed task: ") + e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& jsonl) {
  auto p = jsonl;
  p += ".img";
  return p;
}

void write_image_blob(const std::vector<const WorkspaceImage*>& images, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t h = images.empty() ? kImageSize : images.front()->height;
  const std::size_t w = images.empty() ? kImageSize : images.front()->width;
  const std::uint64_t frame_bytes = h * w * 3;
  out.write(kBlobMagic, sizeof kBlobMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  put<std::uint64_t>(out, images.size());
  const std::uint64_t data_start = sizeof kBlobMagic + 4 + 4 + 8 + 8 * images.size();
  for (std::size_t i = 0; i < images.size(); ++i) put<std::uint64_t>(out, data_start + i * frame_bytes);
  for (const auto* img : images) {
    if (img->height != h || img->width != w) throw ShapeError("image blob frames must share dimensions");
    const auto bytes = img->to_bytes();
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<WorkspaceImage> read_image_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof kBlobMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kBlobMagic, sizeof magic) != 0) {
    throw IoError(path.string() + ": not an image blob");
  }
  const auto h = get<std::uint32_t>(in, path);
  const auto w = get<std::uint32_t>(in, path);
  const auto count = get<std::uint64_t>(in, path);
  const std::uint64_t frame_bytes = std::uint64_t{h} * w * 3;
  std::vector<std::uint64_t> offsets(count);
  for (auto& o : offsets) o = get<std::uint64_t>(in, path);
  std::vector<WorkspaceImage> images;
  images.reserve(count);
  std::vector<std::uint8_t> buf(frame_bytes);
  for (auto off : offsets) {
    in.seekg(static_cast<std::streamoff>(off));
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(frame_bytes))) {
      throw IoError(path.string() + ": truncated image blob");
    }
    images.push_back(WorkspaceImage::from_bytes(buf, h, w));
  }
  return images;
}

void save_demonstrations(const std::vector<Demonstration>& demos, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<const WorkspaceImage*> images;
  for (const auto& d : demos) {
    json frames = json::array();
    for (const auto& f : d.frames) {
      frames.push_back({{"q", f.joints.q}, {"image_ref", images.size()}});
      images.push_back(&f.image);
    }
    const json rec{{"task", task_to_json(d.task)},
                   {"scene", world_to_json(d.scene)},
                   {"contact_frame", d.contact_frame},
                   {"station_frames", d.station_frames},
                   {"frames", std::move(frames)}};
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
  write_image_blob(images, sidecar_path(path));
}

std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const auto images = read_image_blob(sidecar_path(path));
  std::vector<Demonstration> demos;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      Demonstration d;
      d.task = task_from_json(rec.at("task"));
      d.scene = world_from_json(rec.at("scene"));
      d.contact_frame = rec.value("contact_frame", std::size_t{0});
      d.station_frames = rec.value("station_frames", std::vector<std::size_t>{});
      for (const auto& f : rec.at("frames")) {
        const auto ref = f.at("image_ref").get<std::size_t>();
        if (ref >= images.size()) throw IoError("image_ref " + std::to_string(ref) + " outside blob");
        d.frames.push_back({JointState{f.at("q").get<std::vector<double>>()}, images[ref]});
      }
      if (d.frames.size() < 2) throw IoError("demonstration has fewer than two frames");
      demos.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return demos;
}

}  // namespace vla::sim
