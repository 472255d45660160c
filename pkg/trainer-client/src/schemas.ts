import { z } from "zod";

export const earaResponseSchema = z.object({
  rewards: z.array(z.number()),
  nec: z.array(z.number()),
  conserved: z.boolean(),
});

export const advantagesResponseSchema = z.object({
  advantages: z.array(z.array(z.number())),
});

export const healthResponseSchema = z.object({
  status: z.string(),
  version: z.string(),
});

export type EaraResponse = z.infer<typeof earaResponseSchema>;
export type AdvantagesResponse = z.infer<typeof advantagesResponseSchema>;
export type HealthResponse = z.infer<typeof healthResponseSchema>;
