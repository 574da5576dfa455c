#include "lava/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace lava {

namespace {

uint32_t read_u32(const std::vector<uint8_t>& b, size_t off) {
  return static_cast<uint32_t>(b[off]) | static_cast<uint32_t>(b[off + 1]) << 8 |
         static_cast<uint32_t>(b[off + 2]) << 16 | static_cast<uint32_t>(b[off + 3]) << 24;
}

uint16_t read_u16(const std::vector<uint8_t>& b, size_t off) {
  return static_cast<uint16_t>(b[off] | b[off + 1] << 8);
}

[[noreturn]] void parse_fail(const std::string& origin, size_t off, const std::string& what) {
  throw ValidationError(origin + ": " + what + " at byte " + std::to_string(off));
}

}  // namespace

Waveform parse_wav(const std::vector<uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 12) parse_fail(origin, bytes.size(), "file too short for RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0)
    parse_fail(origin, 0, "expected RIFF magic, unsupported format");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    parse_fail(origin, 8, "expected WAVE form type");

  bool have_fmt = false;
  uint16_t format_tag = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t fmt_off = 0, data_off = 0, data_size = 0;
  bool have_data = false;

  size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const size_t chunk_off = off;
    char id[5] = {0};
    std::memcpy(id, bytes.data() + off, 4);
    const uint32_t size = read_u32(bytes, off + 4);
    off += 8;
    if (off + size > bytes.size())
      parse_fail(origin, chunk_off,
                 std::string("chunk '") + id + "' declares " + std::to_string(size) +
                     " bytes but only " + std::to_string(bytes.size() - off) + " remain");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) parse_fail(origin, chunk_off, "fmt chunk shorter than 16 bytes");
      format_tag = read_u16(bytes, off);
      channels = read_u16(bytes, off + 2);
      rate = read_u32(bytes, off + 4);
      bits = read_u16(bytes, off + 14);
      fmt_off = chunk_off;
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = off;
      data_size = size;
      have_data = true;
    }
    off += size + (size & 1);
  }

  if (!have_fmt) parse_fail(origin, bytes.size(), "missing fmt chunk");
  if (!have_data) parse_fail(origin, bytes.size(), "missing data chunk");
  if (format_tag != 1 && format_tag != 3)
    parse_fail(origin, fmt_off, "unsupported format tag " + std::to_string(format_tag));
  if (channels < 1 || channels > 2)
    parse_fail(origin, fmt_off, "unsupported channel count " + std::to_string(channels));
  if (rate == 0) parse_fail(origin, fmt_off, "sample rate is zero");
  if (format_tag == 1 && bits != 16 && bits != 24)
    parse_fail(origin, fmt_off, "unsupported PCM bit depth " + std::to_string(bits));
  if (format_tag == 3 && bits != 32)
    parse_fail(origin, fmt_off, "unsupported float bit depth " + std::to_string(bits));

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_size = bytes_per_sample * channels;
  if (data_size % frame_size != 0)
    parse_fail(origin, data_off,
               "data chunk size " + std::to_string(data_size) + " is not a whole number of " +
                   std::to_string(frame_size) + "-byte frames");
  const size_t frames = data_size / frame_size;

  Waveform w;
  w.rate = static_cast<int>(rate);
  w.samples.resize(frames);
  const uint8_t* p = bytes.data() + data_off;
  for (size_t f = 0; f < frames; ++f) {
    float acc = 0;
    for (int c = 0; c < channels; ++c) {
      const uint8_t* s = p + f * frame_size + static_cast<size_t>(c) * bytes_per_sample;
      float v;
      if (format_tag == 3) {
        uint32_t u = static_cast<uint32_t>(s[0]) | static_cast<uint32_t>(s[1]) << 8 |
                     static_cast<uint32_t>(s[2]) << 16 | static_cast<uint32_t>(s[3]) << 24;
        std::memcpy(&v, &u, 4);
      } else if (bits == 16) {
        const int16_t i = static_cast<int16_t>(s[0] | s[1] << 8);
        v = static_cast<float>(i) / 32768.0f;
      } else {
        int32_t i = s[0] | s[1] << 8 | s[2] << 16;
        if (i & 0x800000) i |= ~0xffffff;
        v = static_cast<float>(i) / 8388608.0f;
      }
      acc += v;
    }
    w.samples[f] = acc / static_cast<float>(channels);
  }
  return w;
}

Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path);
  return parse_wav(bytes, path);
}

std::vector<uint8_t> encode_wav_pcm16(const Waveform& w) {
  const size_t n = w.samples.size();
  const uint32_t data_size = static_cast<uint32_t>(n * 2);
  std::vector<uint8_t> out(44 + data_size);
  auto put_u32 = [&](size_t off, uint32_t v) {
    out[off] = static_cast<uint8_t>(v & 0xff);
    out[off + 1] = static_cast<uint8_t>(v >> 8 & 0xff);
    out[off + 2] = static_cast<uint8_t>(v >> 16 & 0xff);
    out[off + 3] = static_cast<uint8_t>(v >> 24 & 0xff);
  };
  auto put_u16 = [&](size_t off, uint16_t v) {
    out[off] = static_cast<uint8_t>(v & 0xff);
    out[off + 1] = static_cast<uint8_t>(v >> 8 & 0xff);
  };
  std::memcpy(out.data(), "RIFF", 4);
  put_u32(4, 36 + data_size);
  std::memcpy(out.data() + 8, "WAVE", 4);
  std::memcpy(out.data() + 12, "fmt ", 4);
  put_u32(16, 16);
  put_u16(20, 1);
  put_u16(22, 1);
  put_u32(24, static_cast<uint32_t>(w.rate));
  put_u32(28, static_cast<uint32_t>(w.rate) * 2);
  put_u16(32, 2);
  put_u16(34, 16);
  std::memcpy(out.data() + 36, "data", 4);
  put_u32(40, data_size);
  for (size_t i = 0; i < n; ++i) {
    const double scaled = std::lround(static_cast<double>(w.samples[i]) * 32768.0);
    const int32_t v = static_cast<int32_t>(std::max(-32768.0, std::min(32767.0, scaled)));
    put_u16(44 + i * 2, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  return out;
}

void write_wav_pcm16(const std::string& path, const Waveform& w) {
  const std::vector<uint8_t> bytes = encode_wav_pcm16(w);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace lava
