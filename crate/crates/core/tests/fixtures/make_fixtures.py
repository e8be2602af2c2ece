# Builds raw SMF fixtures byte by byte, then records what mido reads from them.
import json, struct, mido

def vlq(n):
    out = [n & 0x7f]
    n >>= 7
    while n:
        out.append((n & 0x7f) | 0x80)
        n >>= 7
    return bytes(reversed(out))

def chunk(events):
    body = b''.join(vlq(d) + data for d, data in events)
    return b'MTrk' + struct.pack('>I', len(body)) + body

def header(fmt, n, div):
    return b'MThd' + struct.pack('>IHHH', 6, fmt, n, div)

# Type 1, 3 chunks, 96 ticks/beat: conductor with tempo + 4/4 + a 3/4 change,
# a melodic chunk with running status, velocity-0 note-offs and a program
# change, and a drum chunk with sysex and controller noise.
conductor = chunk([
    (0, b'\xff\x51\x03\x07\xa1\x20'),
    (0, b'\xff\x58\x04\x04\x02\x18\x08'),
    (768, b'\xff\x58\x04\x03\x02\x18\x08'),
    (0, b'\xff\x2f\x00'),
])
melody = chunk([
    (0, b'\xc0\x05'),
    (0, b'\x90\x3c\x64'),
    (48, b'\x40\x50'),          # running status: note on 64
    (48, b'\x3c\x00'),          # running status: note on vel 0 -> off 60
    (0, b'\x80\x40\x40'),
    (0, b'\xb0\x07\x64'),
    (24, b'\xc0\x22'),          # program change to 34
    (0, b'\x90\x3c\x50'),
    (100, b'\x90\x3c\x00'),
    (7, b'\xe0\x00\x40'),       # pitch bend
    (0, b'\xff\x2f\x00'),
])
drums = chunk([
    (0, b'\xf0\x05\x7e\x7f\x09\x01\xf7'),
    (0, b'\x99\x24\x70'),
    (12, b'\x89\x24\x00'),
    (84, b'\x99\x26\x70'),
    (0, b'\x2a\x60'),           # running status
    (96, b'\x99\x26\x00'),
    (0, b'\x2a\x00'),
    (0, b'\xff\x2f\x00'),
])
type1 = header(1, 3, 96) + conductor + melody + drums

# Type 0, 480 ticks/beat, multi-channel with a long delta (multi-byte VLQ).
type0 = header(0, 1, 480) + chunk([
    (0, b'\xff\x58\x04\x04\x02\x18\x08'),
    (0, b'\xc1\x21'),
    (0, b'\x91\x28\x60'),
    (0, b'\x90\x48\x60'),
    (1920, b'\x81\x28\x00'),
    (0, b'\x48\x00'),           # running status 0x81: note off 72 on channel 1 (unmatched)
    (20000, b'\x80\x48\x00'),
    (0, b'\xff\x2f\x00'),
])

def dump(data):
    import io
    mf = mido.MidiFile(file=io.BytesIO(data))
    tracks = []
    for tr in mf.tracks:
        tick = 0
        msgs = []
        for m in tr:
            tick += m.time
            if m.type == 'note_on' and m.velocity > 0:
                msgs.append({'kind': 'note_on', 'tick': tick, 'channel': m.channel, 'pitch': m.note, 'velocity': m.velocity})
            elif m.type in ('note_on', 'note_off'):
                msgs.append({'kind': 'note_off', 'tick': tick, 'channel': m.channel, 'pitch': m.note})
            elif m.type == 'program_change':
                msgs.append({'kind': 'program_change', 'tick': tick, 'channel': m.channel, 'program': m.program})
            elif m.type == 'time_signature':
                msgs.append({'kind': 'time_signature', 'tick': tick, 'numerator': m.numerator, 'denominator': m.denominator})
            elif m.type == 'set_tempo':
                msgs.append({'kind': 'tempo', 'tick': tick, 'micros_per_beat': m.tempo})
            elif m.type == 'end_of_track':
                msgs.append({'kind': 'end_of_track', 'tick': tick})
            else:
                msgs.append({'kind': 'other', 'tick': tick})
        tracks.append(msgs)
    return {'type': mf.type, 'ticks_per_beat': mf.ticks_per_beat, 'tracks': tracks}

import sys
out = sys.argv[1]
for name, data in [('type1', type1), ('type0', type0)]:
    open(f'{out}/{name}.mid', 'wb').write(data)
    json.dump(dump(data), open(f'{out}/{name}.mido.json', 'w'), indent=1)
print('ok')
