"""
Generating a synthetic station fleet
====================================

The real measurement campaign behind this package is not
redistributable, so the package ships a seeded generator producing
station tables with the same schema: 15-minute timestamps, six local
weather measurements, numerical-forecast columns that ride along, and
power. Everything derives from a handful of physical ingredients, which
makes the data learnable but not trivial.
"""

import tempfile

import numpy as np

from pvforecast import synth

# One station, fully specified. cloudiness scales a smooth random
# attenuation field; noise_scale adds measurement noise.
spec = synth.SynthStationSpec(
    station_id="demo0",
    panel_count=220,
    panel_size=1.9,
    panel_angle=33.0,
    latitude=36.5,
    longitude=104.2,
    cloudiness=0.35,
    noise_scale=0.02,
    days=4,
    seed=11,
    start_day=152,
)
table, metadata = synth.generate_station(spec)
print("rows:", len(table.timestamps), "(4 days x 96 slots)")
print("first timestamp:", table.timestamps[0])
print("capacity_kw:", metadata.capacity_kw)

# Power is exactly zero at night. By day it climbs with the sun until
# the inverter's thermal limit starts to bite, so the peak lands in the
# morning, not at noon. Weather column 0 is measured global irradiance
# in W/m^2.
day_one = table.power[:96]
print("night slots with any power:", int((day_one[:24] > 0).sum()))
print("peak power day 1: %.3f MW at slot %d" % (day_one.max(), day_one.argmax()))

# Afternoon output sags below the mirrored morning value because panel
# heat accumulates from sunrise onward, derating the panels and pulling
# the inverter limit down; attention over past weather is what lets the
# model track that state.
slot_a, slot_b = 36, 60  # equal clear-sky irradiance, morning vs afternoon
print("morning slot %d: %.3f MW, mirrored afternoon slot %d: %.3f MW"
      % (slot_a, day_one[slot_a], slot_b, day_one[slot_b]))

# generate_fleet draws varied station specs from one master seed.
tables, fleet_meta = synth.generate_fleet(n_stations=4, days=3, seed=0)
for station_id in sorted(fleet_meta):
    meta = fleet_meta[station_id]
    print("%s: %4d panels, %8.1f kW, latitude %.1f"
          % (station_id, meta.panel_count, meta.capacity_kw, meta.latitude))

# write_fleet lays the same fleet out as CSV files for the CLI:
# one table per station, a metadata sheet, and the column-role map.
with tempfile.TemporaryDirectory() as out:
    paths = synth.write_fleet(out, tables, fleet_meta)
    for key in sorted(paths):
        print("wrote %s: %s" % (key, paths[key]))
