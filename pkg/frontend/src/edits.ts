// Edit operations, schema-validated against the service contract before
// any request leaves the client.

import { z } from "zod";

export const boxSchema = z.object({
  category: z.number().int().nonnegative(),
  corners: z.array(z.number()).length(24),
});

export const editSchema = z.discriminatedUnion("kind", [
  z.object({
    kind: z.literal("move"),
    box_id: z.number().int().nonnegative(),
    delta: z.array(z.number()).length(3),
  }),
  z.object({
    kind: z.literal("remove"),
    box_id: z.number().int().nonnegative(),
  }),
  z.object({
    kind: z.literal("add"),
    box: boxSchema,
  }),
]);

export type EditOp = z.infer<typeof editSchema>;
export type BoxPayload = z.infer<typeof boxSchema>;

export function validateEdits(edits: unknown[]): EditOp[] {
  return edits.map((e, i) => {
    const parsed = editSchema.safeParse(e);
    if (!parsed.success) {
      throw new Error(`edit ${i} fails the service schema: ${parsed.error.message}`);
    }
    return parsed.data;
  });
}

export function boxCenter(box: BoxPayload): [number, number, number] {
  let x = 0,
    y = 0,
    z = 0;
  for (let i = 0; i < 8; i++) {
    x += box.corners[i * 3];
    y += box.corners[i * 3 + 1];
    z += box.corners[i * 3 + 2];
  }
  return [x / 8, y / 8, z / 8];
}
