// Copyright 2026 The Maskmark Authors
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

#pragma once

#include "maskmark/image_io.hpp"

namespace maskmark {

// In-process baseline JPEG round-trip: YCbCr, 8×8 float DCT, standard
// quantization tables scaled by libjpeg's quality rule, 4:4:4 (no chroma
// subsampling). No entropy coding — quantization is the only lossy stage,
// which is all the distortion layer needs. Deterministic pure function.
ImageU8 jpeg_roundtrip_u8(const ImageU8& img, int quality);

// Quality-scaled quantization table entry, for tests: table 0 = luminance,
// 1 = chrominance; index in 0..63 row-major.
int jpeg_quant_entry(int table, int index, int quality);

}  // namespace maskmark
